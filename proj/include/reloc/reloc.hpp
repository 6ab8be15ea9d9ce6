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

#pragma once

#include "reloc/association.hpp"
#include "reloc/clahe.hpp"
#include "reloc/common.hpp"
#include "reloc/config.hpp"
#include "reloc/dbscan.hpp"
#include "reloc/eval.hpp"
#include "reloc/features.hpp"
#include "reloc/geometry.hpp"
#include "reloc/harness.hpp"
#include "reloc/image.hpp"
#include "reloc/io.hpp"
#include "reloc/mapdb.hpp"
#include "reloc/pipeline.hpp"
#include "reloc/pose.hpp"
#include "reloc/projection.hpp"
#include "reloc/retrieval.hpp"
