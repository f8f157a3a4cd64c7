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

// Checkpoint format: one line of JSON header terminated by '\n', followed by
// `count` IEEE-754 binary64 values in little-endian byte order.
//
//   {"count":N,"dtype":"float64","endian":"little","format":"fedload-parameters",
//    "manifest":[{"name":"lstm.weight_ih","shape":[80,1]},...],"meta":{...},
//    "version":1}

#ifndef FEDLOAD_CHECKPOINT_HPP_
#define FEDLOAD_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "fedload/common.hpp"
#include "fedload/neural.hpp"

namespace fedload {

inline nlohmann::json manifest_to_json(const Manifest& manifest) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : manifest) out.push_back({{"name", t.name}, {"shape", t.shape}});
  return out;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest out;
  for (const auto& t : j) {
    out.push_back({t.at("name").get<std::string>(),
                   t.at("shape").get<std::vector<std::size_t>>()});
  }
  return out;
}

inline void write_parameters(std::ostream& out, const ParameterVector& params,
                             const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header = {{"format", "fedload-parameters"},
                           {"version", 1},
                           {"dtype", "float64"},
                           {"endian", "little"},
                           {"count", params.size()},
                           {"manifest", manifest_to_json(params.manifest())},
                           {"meta", meta}};
  out << header.dump() << '\n';
  char bytes[8];
  for (double v : params.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.write(bytes, 8);
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing parameters");
}

inline ParameterVector read_parameters(std::istream& in,
                                       nlohmann::json* meta = nullptr) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kParse,
          "checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("checkpoint header: ") + e.what());
  }
  require(header.value("format", "") == "fedload-parameters" &&
              header.value("dtype", "") == "float64" &&
              header.value("endian", "") == "little",
          ErrorKind::kParse, "checkpoint: unsupported header");
  const auto count = header.at("count").get<std::size_t>();
  Manifest manifest = manifest_from_json(header.at("manifest"));
  std::vector<double> values(count);
  char bytes[8];
  for (auto& v : values) {
    in.read(bytes, 8);
    require(in.gcount() == 8, ErrorKind::kParse, "checkpoint: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    }
    v = std::bit_cast<double>(bits);
  }
  if (meta != nullptr) *meta = header.value("meta", nlohmann::json::object());
  return ParameterVector(std::move(values), std::move(manifest));
}

inline void save_parameters(const std::string& path, const ParameterVector& params,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path + "'");
  write_parameters(out, params, meta);
}

inline ParameterVector load_parameters(const std::string& path,
                                       nlohmann::json* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kMissingFile, "cannot open '" + path + "'");
  return read_parameters(in, meta);
}

}  // namespace fedload

#endif  // FEDLOAD_CHECKPOINT_HPP_
