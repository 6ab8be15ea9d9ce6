//==============================================================================
// Copyright 2026 The reloc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================

#include "test_util.hpp"

#include <cstdlib>

namespace reloc
{
namespace
{

TEST(Config, DefaultsValidate)
{
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.retrieval.k, 50);
  EXPECT_EQ(c.retrieval.k_prime, 10);
  EXPECT_EQ(c.ransac.inlier_thresh_px, 5.0);
}

TEST(Config, OverridesSetTypedFields)
{
  PipelineConfig c;
  apply_override(c, "retrieval.k=20");
  apply_override(c, "ransac.inlier_thresh_px=3.5");
  apply_override(c, "ablation.use_two_stage=false");
  apply_override(c, "features.local=harris-patch");
  apply_override(c, "ransac.seed=18446744073709551615");
  EXPECT_EQ(c.retrieval.k, 20);
  EXPECT_EQ(c.ransac.inlier_thresh_px, 3.5);
  EXPECT_FALSE(c.association.use_two_stage);
  EXPECT_EQ(c.map.local_extractor, "harris-patch");
  EXPECT_EQ(c.ransac.seed, 18446744073709551615ULL);
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
  PipelineConfig c;
  try
  {
    apply_override(c, "retrieval.kk=3");
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_NE(std::string(e.what()).find("retrieval.kk"), std::string::npos);
  }
  EXPECT_THROW(apply_override(c, "retrieval.k=three"), Error);
  EXPECT_THROW(apply_override(c, "retrieval.k=3.5"), Error);
  EXPECT_THROW(apply_override(c, "ablation.use_hec=maybe"), Error);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), Error);
  EXPECT_THROW(apply_override(c, "=5"), Error);
}

TEST(Config, IniRoundtrip)
{
  test::TempDir dir("cfg");
  PipelineConfig c;
  apply_override(c, "retrieval.k_prime=7");
  apply_override(c, "association.crop_margin=0.15");
  apply_override(c, "ablation.use_covis_filter=false");
  apply_override(c, "projection.face_size=256");
  {
    std::ofstream out(dir / "c.ini");
    write_ini(c, out);
  }
  PipelineConfig d;
  apply_ini(d, dir / "c.ini");
  std::ostringstream a, b;
  write_ini(c, a);
  write_ini(d, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(d.retrieval.k_prime, 7);
  EXPECT_EQ(d.association.crop_margin, 0.15);
  EXPECT_FALSE(d.association.use_covis_filter);
  EXPECT_EQ(d.map.projection.face_size, 256);
}

TEST(Config, IniErrors)
{
  test::TempDir dir("cfg_err");
  PipelineConfig c;
  EXPECT_THROW(apply_ini(c, dir / "missing.ini"), Error);
  test::write_text(dir / "unknown.ini", "[retrieval]\nbogus = 1\n");
  EXPECT_THROW(apply_ini(c, dir / "unknown.ini"), Error);
  test::write_text(dir / "loose.ini", "k = 1\n");
  EXPECT_THROW(apply_ini(c, dir / "loose.ini"), Error);
  test::write_text(dir / "partial.ini", "[ransac]\nmax_iters = 77\n");
  apply_ini(c, dir / "partial.ini");
  EXPECT_EQ(c.ransac.max_iters, 77);
  EXPECT_EQ(c.retrieval.k, 50);
}

TEST(Config, ValidationCatchesInconsistentValues)
{
  PipelineConfig c;
  apply_override(c, "retrieval.k_prime=80");
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, SeedFromEnvironment)
{
  ::unsetenv("RELOC_SEED");
  EXPECT_FALSE(env_seed().has_value());
  ::setenv("RELOC_SEED", "1234", 1);
  EXPECT_EQ(env_seed(), std::optional<std::uint64_t>(1234));
  ::setenv("RELOC_SEED", "abc", 1);
  EXPECT_THROW(env_seed(), Error);
  ::unsetenv("RELOC_SEED");
}

} // namespace
} // namespace reloc
