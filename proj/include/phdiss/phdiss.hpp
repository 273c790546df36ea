/*
 Copyright 2026 The phdiss Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef PHDISS_PHDISS_HPP
#define PHDISS_PHDISS_HPP

#include "phdiss/errors.hpp"
#include "phdiss/linalg.hpp"
#include "phdiss/expression.hpp"
#include "phdiss/system.hpp"
#include "phdiss/stepper.hpp"
#include "phdiss/ocp.hpp"
#include "phdiss/dissipativity.hpp"
#include "phdiss/registry.hpp"
#include "phdiss/config_io.hpp"

namespace phdiss {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace phdiss

#endif  // PHDISS_PHDISS_HPP
