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

#include "advbct/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "advbct/errors.hpp"

namespace advbct {

void LabeledDataset::validate() const {
    if (features.rows != labels.size()) {
        throw ShapeError("dataset: feature rows != label count");
    }
    if (class_count <= 0 || labels.empty()) {
        throw IoError("dataset: empty");
    }
    if (labels.size() < static_cast<std::size_t>(class_count)) {
        throw IoError("dataset: fewer samples than classes");
    }
    std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
    for (int y : labels) {
        if (y < 0 || y >= class_count) {
            throw IoError("dataset: label " + std::to_string(y) + " out of range");
        }
        seen[static_cast<std::size_t>(y)] = true;
    }
    for (std::size_t c = 0; c < seen.size(); ++c) {
        if (!seen[c]) throw IoError("dataset: class " + std::to_string(c) + " has no samples");
    }
}

AllocationKind allocation_kind_from_string(const std::string& s) {
    if (s == "extended-data") return AllocationKind::kExtendedData;
    if (s == "extended-class") return AllocationKind::kExtendedClass;
    if (s == "enlarged-backbone-data") return AllocationKind::kEnlargedBackboneData;
    if (s == "enlarged-backbone-class") return AllocationKind::kEnlargedBackboneClass;
    throw ConfigError("unknown allocation kind: " + s);
}

std::string to_string(AllocationKind kind) {
    switch (kind) {
        case AllocationKind::kExtendedData: return "extended-data";
        case AllocationKind::kExtendedClass: return "extended-class";
        case AllocationKind::kEnlargedBackboneData: return "enlarged-backbone-data";
        case AllocationKind::kEnlargedBackboneClass: return "enlarged-backbone-class";
    }
    throw ConfigError("unknown allocation kind");
}

bool enlarged_backbone(AllocationKind kind) {
    return kind == AllocationKind::kEnlargedBackboneData ||
           kind == AllocationKind::kEnlargedBackboneClass;
}

namespace {

bool row_less(const DenseMatrix& m, std::size_t a, std::size_t b) {
    for (std::size_t j = 0; j < m.cols; ++j) {
        if (m.at(a, j) != m.at(b, j)) return m.at(a, j) < m.at(b, j);
    }
    return false;
}

// Row indices per class, each list sorted by feature values so selection is
// independent of input row order.
std::map<int, std::vector<std::size_t>> canonical_class_rows(const LabeledDataset& ds) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& [cls, rows] : by_class) {
        std::sort(rows.begin(), rows.end(),
                  [&](std::size_t a, std::size_t b) { return row_less(ds.features, a, b); });
    }
    return by_class;
}

LabeledDataset gather_rows(const LabeledDataset& ds, const std::vector<std::size_t>& rows,
                           const std::vector<int>& new_labels, int class_count) {
    LabeledDataset out;
    out.features = DenseMatrix(rows.size(), ds.dim());
    out.labels = new_labels;
    out.class_count = class_count;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out.features.at(i, j) = ds.features.at(rows[i], j);
        }
    }
    return out;
}

// First k positions of a seeded shuffle of [0, n).
std::vector<std::size_t> pick_k(std::size_t n, std::size_t k, SeededRng rng) {
    std::vector<std::size_t> perm = rng.permutation(n);
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    return perm;
}

}  // namespace

std::size_t old_class_count(std::size_t classes, double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(classes)));
}

AllocationResult allocate(const LabeledDataset& ds, const AllocationSpec& spec) {
    ds.validate();
    if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) {
        throw ConfigError("allocation fraction must be in (0,1)");
    }
    SeededRng rng(spec.seed);
    const auto by_class = canonical_class_rows(ds);

    AllocationResult res;
    res.new_train = ds;

    const bool class_style = spec.kind == AllocationKind::kExtendedClass ||
                             spec.kind == AllocationKind::kEnlargedBackboneClass;
    if (class_style) {
        const std::size_t keep = old_class_count(static_cast<std::size_t>(ds.class_count),
                                                 spec.fraction);
        if (keep == 0) {
            throw ConfigError("allocation fraction keeps zero classes");
        }
        const std::vector<std::size_t> chosen =
            pick_k(static_cast<std::size_t>(ds.class_count), keep, rng.fork(0));
        std::vector<std::size_t> rows;
        std::vector<int> labels;
        res.old_to_orig.clear();
        for (std::size_t dense = 0; dense < chosen.size(); ++dense) {
            const int orig = static_cast<int>(chosen[dense]);
            res.old_to_orig.push_back(orig);
            for (std::size_t r : by_class.at(orig)) {
                rows.push_back(r);
                labels.push_back(static_cast<int>(dense));
            }
        }
        res.old_train = gather_rows(ds, rows, labels, static_cast<int>(keep));
    } else {
        std::vector<std::size_t> rows;
        std::vector<int> labels;
        for (const auto& [cls, class_rows] : by_class) {
            const std::size_t n_k = class_rows.size();
            const std::size_t keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor(spec.fraction *
                                                       static_cast<double>(n_k))));
            const std::vector<std::size_t> sel =
                pick_k(n_k, keep, rng.fork(static_cast<std::uint64_t>(cls) + 1));
            for (std::size_t s : sel) {
                rows.push_back(class_rows[s]);
                labels.push_back(cls);
            }
        }
        res.old_train = gather_rows(ds, rows, labels, ds.class_count);
        res.old_to_orig.resize(static_cast<std::size_t>(ds.class_count));
        for (int c = 0; c < ds.class_count; ++c) res.old_to_orig[static_cast<std::size_t>(c)] = c;
    }
    res.old_train.validate();
    return res;
}

LabeledDataset gen_synthetic(int classes, int per_class, int d_in, double spread,
                             std::uint64_t seed) {
    if (classes < 2 || per_class < 2) {
        throw ConfigError("gen_synthetic: need at least 2 classes and 2 samples per class");
    }
    if (d_in < 1) throw ConfigError("gen_synthetic: dimension must be positive");
    if (!(spread >= 0.0)) throw ConfigError("gen_synthetic: spread must be >= 0");

    SeededRng rng(seed);
    SeededRng anchor_rng = rng.fork(0);
    SeededRng noise_rng = rng.fork(1);

    const std::size_t d = static_cast<std::size_t>(d_in);
    std::vector<std::vector<double>> anchors;
    anchors.reserve(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        std::vector<double> a(d);
        for (double& x : a) x = anchor_rng.normal();
        anchors.push_back(l2_normalize(a));
    }

    LabeledDataset ds;
    ds.class_count = classes;
    ds.features = DenseMatrix(static_cast<std::size_t>(classes) *
                                  static_cast<std::size_t>(per_class),
                              d);
    ds.labels.reserve(ds.features.rows);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int s = 0; s < per_class; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                ds.features.at(row, j) =
                    anchors[static_cast<std::size_t>(c)][j] + spread * noise_rng.normal();
            }
            ds.labels.push_back(c);
            ++row;
        }
    }
    ds.validate();
    return ds;
}

EvalSplit split_eval(const LabeledDataset& ds, int queries_per_class, std::uint64_t seed) {
    ds.validate();
    if (queries_per_class < 1) {
        throw ConfigError("split_eval: queries_per_class must be >= 1");
    }
    const auto by_class = canonical_class_rows(ds);
    for (const auto& [cls, rows] : by_class) {
        if (rows.size() <= static_cast<std::size_t>(queries_per_class)) {
            throw ConfigError("split_eval: class " + std::to_string(cls) +
                              " too small for " + std::to_string(queries_per_class) +
                              " queries");
        }
    }
    SeededRng rng(seed);
    std::vector<bool> is_query(ds.size(), false);
    std::vector<std::size_t> query_rows;
    std::vector<int> query_labels;
    for (const auto& [cls, rows] : by_class) {
        const std::vector<std::size_t> sel =
            pick_k(rows.size(), static_cast<std::size_t>(queries_per_class),
                   rng.fork(static_cast<std::uint64_t>(cls)));
        for (std::size_t s : sel) {
            is_query[rows[s]] = true;
            query_rows.push_back(rows[s]);
            query_labels.push_back(cls);
        }
    }
    std::vector<std::size_t> gallery_rows;
    std::vector<int> gallery_labels;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!is_query[i]) {
            gallery_rows.push_back(i);
            gallery_labels.push_back(ds.labels[i]);
        }
    }
    EvalSplit split;
    split.query = gather_rows(ds, query_rows, query_labels, ds.class_count);
    split.gallery = gather_rows(ds, gallery_rows, gallery_labels, ds.class_count);
    split.query.validate();
    split.gallery.validate();
    return split;
}

namespace {

double parse_double(std::string_view s, const std::string& path, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError(path + ":" + std::to_string(line_no) + ": bad numeric field '" +
                      std::string(s) + "'");
    }
    return v;
}

}  // namespace

void write_csv(const std::string& path, const LabeledDataset& ds) {
    ds.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out << ',' << format_double(ds.features.at(i, j));
        }
        out << "\n";
    }
    if (!out.good()) throw IoError("write failed: " + path);
}

LabeledDataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": missing header");
    if (line.rfind("label", 0) != 0) {
        throw IoError(path + ": header must start with 'label'");
    }
    std::size_t expected_cols = 0;
    for (char ch : line)
        if (ch == ',') ++expected_cols;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t field = 0;
        std::size_t start = 0;
        std::size_t cols_seen = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            const std::string_view cell(line.data() + start, end - start);
            if (field == 0) {
                int y = 0;
                const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), y);
                if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || y < 0) {
                    throw IoError(path + ":" + std::to_string(line_no) +
                                  ": bad label '" + std::string(cell) + "'");
                }
                labels.push_back(y);
            } else {
                values.push_back(parse_double(cell, path, line_no));
                ++cols_seen;
            }
            ++field;
            if (end == line.size()) break;
            start = end + 1;
        }
        if (cols_seen != expected_cols) {
            throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(expected_cols) + " feature fields, got " +
                          std::to_string(cols_seen));
        }
    }
    if (labels.empty()) throw IoError(path + ": empty dataset (header only)");

    LabeledDataset ds;
    ds.features = DenseMatrix(labels.size(), expected_cols);
    ds.features.values = std::move(values);
    ds.labels = std::move(labels);
    ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    ds.validate();
    return ds;
}

}  // namespace advbct
