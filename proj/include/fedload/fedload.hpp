// Copyright 2026 The fedload Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDLOAD_FEDLOAD_HPP_
#define FEDLOAD_FEDLOAD_HPP_

#include "fedload/checkpoint.hpp"
#include "fedload/clustering.hpp"
#include "fedload/common.hpp"
#include "fedload/config.hpp"
#include "fedload/data.hpp"
#include "fedload/federated.hpp"
#include "fedload/hypertune.hpp"
#include "fedload/neural.hpp"
#include "fedload/pipeline.hpp"
#include "fedload/schemes.hpp"

#endif  // FEDLOAD_FEDLOAD_HPP_
