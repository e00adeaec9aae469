/*
 * Copyright 2026 AdvBCT Toolkit Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace advbct {

// "key = value" lines; '#' starts a comment; blank lines ignored. Duplicate
// keys and lines without '=' are errors. Which keys are *valid* is decided by
// the consumer.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// FNV-1a (64-bit) over the file bytes, as 16 hex digits.
std::string file_digest_hex(const std::string& path);

// Everything needed to re-run a command: re-executing with these settings on
// inputs with these digests reproduces the outputs byte-exactly.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> settings;                // resolved, sorted by key
    std::vector<std::pair<std::string, std::string>> inputs;    // path, digest
    std::uint64_t seed = 0;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace advbct
