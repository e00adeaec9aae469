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
#include <string>
#include <vector>

#include "advbct/matrix.hpp"
#include "advbct/rng.hpp"

namespace advbct {

struct LabeledDataset {
    DenseMatrix features;      // N x d_in
    std::vector<int> labels;   // N class ids in [0, class_count)
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }

    // Every class id in [0, class_count) must appear at least once.
    void validate() const;
};

enum class AllocationKind {
    kExtendedData,
    kExtendedClass,
    kEnlargedBackboneData,
    kEnlargedBackboneClass,
};

AllocationKind allocation_kind_from_string(const std::string& s);
std::string to_string(AllocationKind kind);

// Whether the new model uses the wider backbone for this allocation.
bool enlarged_backbone(AllocationKind kind);

struct AllocationSpec {
    AllocationKind kind = AllocationKind::kExtendedData;
    double fraction = 0.3;
    std::uint64_t seed = 0;
};

struct AllocationResult {
    LabeledDataset old_train;        // labels re-indexed densely
    LabeledDataset new_train;        // the full dataset, labels unchanged
    std::vector<int> old_to_orig;    // original class id per old-train label
};

// Number of old-training classes in a class-style allocation.
std::size_t old_class_count(std::size_t classes, double fraction);

// Extended-data keeps floor(fraction*n_k) samples (at least one) of every
// class; class-style allocations keep all samples of floor(fraction*C)
// classes. Selection is canonicalized by sorting each class's rows, so the
// chosen multiset does not depend on input row order.
AllocationResult allocate(const LabeledDataset& ds, const AllocationSpec& spec);

// Class k is an isotropic cloud of width `spread` around a random unit-sphere
// anchor. Deterministic in the seed.
LabeledDataset gen_synthetic(int classes, int per_class, int d_in, double spread,
                             std::uint64_t seed);

struct EvalSplit {
    LabeledDataset query;
    LabeledDataset gallery;
};

// Disjoint query/gallery split with exactly queries_per_class queries per
// class; every query class keeps at least one gallery positive.
EvalSplit split_eval(const LabeledDataset& ds, int queries_per_class, std::uint64_t seed);

// CSV with header "label,f0,f1,...". Floats use the shortest decimal form
// that round-trips exactly, so write -> read -> write is byte-identical.
void write_csv(const std::string& path, const LabeledDataset& ds);
LabeledDataset read_csv(const std::string& path);

}  // namespace advbct
