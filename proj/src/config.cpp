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

#include "advbct/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "advbct/errors.hpp"
#include "advbct/version.hpp"

namespace advbct {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        }
        if (!out.emplace(key, value).second) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
        }
    }
    return out;
}

std::string file_digest_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    std::ostringstream hex;
    hex << std::hex << std::nouppercase;
    for (int shift = 60; shift >= 0; shift -= 4) hex << ((h >> shift) & 0xF);
    return hex.str();
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    nlohmann::ordered_json doc;
    doc["command"] = manifest.command;
    doc["version"] = kVersion;
    doc["seed"] = manifest.seed;
    nlohmann::ordered_json settings = nlohmann::ordered_json::object();
    for (const auto& [k, v] : manifest.settings) settings[k] = v;
    doc["settings"] = settings;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
    for (const auto& [p, digest] : manifest.inputs) {
        inputs.push_back({{"path", p}, {"digest", digest}});
    }
    doc["inputs"] = inputs;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace advbct
