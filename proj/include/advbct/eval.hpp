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

#include "advbct/data.hpp"
#include "advbct/matrix.hpp"
#include "advbct/model.hpp"

namespace advbct {

struct MapResult {
    double value = 0.0;       // mean over scored queries, in [0, 1]
    std::size_t scored = 0;   // queries with at least one gallery positive
    std::size_t skipped = 0;  // queries with none (excluded from the mean)
};

// Mean average precision of Euclidean nearest-neighbor retrieval. Gallery
// items are ranked by ascending distance, ties broken by ascending gallery
// index; the average-precision denominator is the total number of gallery
// positives for the query's label.
MapResult mean_average_precision(const DenseMatrix& query_emb,
                                 const std::vector<int>& query_labels,
                                 const DenseMatrix& gallery_emb,
                                 const std::vector<int>& gallery_labels);

DenseMatrix embed_dataset(const MlpModel& model, const LabeledDataset& ds);

// Self-test: one model embeds both sides. Cross-test: the query model embeds
// queries, the gallery model embeds the gallery.
MapResult self_test(const MlpModel& model, const LabeledDataset& query,
                    const LabeledDataset& gallery);
MapResult cross_test(const MlpModel& query_model, const MlpModel& gallery_model,
                     const LabeledDataset& query, const LabeledDataset& gallery);

// Compatibility gain: position of the cross-test between the old self-test
// and the independent reference self-test, squashed to (0, 1).
double p_comp(double m_new_old, double m_old_old, double m_star_star);

// Self-test gain of the new model over the independent reference, squashed.
double p_up(double m_new_new, double m_star_star);

// Weighted harmonic mean of the two gains; beta > 0 weights the update gain.
double p_beta_score(double comp, double up, double beta);

struct TestSetMaps {
    std::string name;
    double self_old = 0.0;   // old model both sides
    double self_new = 0.0;   // new model both sides
    double self_star = 0.0;  // independent reference both sides
    double cross = 0.0;      // new queries against the old gallery
};

struct RetrievalReport {
    std::vector<TestSetMaps> sets;
    double beta = 1.0;
    // Aggregates as percents: each gain is computed per test set first, then
    // arithmetically averaged across sets.
    double p_up = 0.0;
    double p_comp = 0.0;
    double p_beta_score = 0.0;
};

RetrievalReport aggregate_report(const std::vector<TestSetMaps>& sets, double beta);

struct BackfillPoint {
    double rho = 0.0;  // refreshed fraction of the gallery
    double map = 0.0;
};

using BackfillCurve = std::vector<BackfillPoint>;

// Queries always use the new model. For each fraction rho, the first
// round(rho*G) gallery rows in a seeded refresh order are re-embedded with
// the new model, the rest keep their old embeddings. Fractions must be
// strictly increasing from 0 to 1, so the endpoints reproduce the cross-test
// and the new self-test exactly.
BackfillCurve backfill_curve(const MlpModel& old_model, const MlpModel& new_model,
                             const LabeledDataset& query, const LabeledDataset& gallery,
                             const std::vector<double>& fractions, std::uint64_t seed);

void write_backfill_csv(const std::string& path, const BackfillCurve& curve);

}  // namespace advbct
