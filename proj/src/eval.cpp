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

#include "advbct/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "advbct/errors.hpp"
#include "advbct/rng.hpp"

namespace advbct {

MapResult mean_average_precision(const DenseMatrix& query_emb,
                                 const std::vector<int>& query_labels,
                                 const DenseMatrix& gallery_emb,
                                 const std::vector<int>& gallery_labels) {
    if (query_emb.rows != query_labels.size() || gallery_emb.rows != gallery_labels.size()) {
        throw ShapeError("label count does not match embedding rows");
    }
    if (query_emb.cols != gallery_emb.cols) {
        throw ShapeError("query and gallery embedding dimensions differ");
    }
    if (query_emb.rows == 0 || gallery_emb.rows == 0) {
        throw ConfigError("empty query or gallery");
    }

    const std::size_t g = gallery_emb.rows;
    std::vector<double> dist(g);
    std::vector<std::size_t> order(g);
    MapResult res;
    double ap_sum = 0.0;

    for (std::size_t qi = 0; qi < query_emb.rows; ++qi) {
        const int label = query_labels[qi];
        std::size_t positives = 0;
        for (int gl : gallery_labels) {
            if (gl == label) ++positives;
        }
        if (positives == 0) {
            ++res.skipped;
            continue;
        }
        const auto q = query_emb.row(qi);
        for (std::size_t i = 0; i < g; ++i) dist[i] = euclidean_distance(q, gallery_emb.row(i));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (dist[a] != dist[b]) return dist[a] < dist[b];
            return a < b;
        });
        double ap = 0.0;
        std::size_t seen = 0;
        for (std::size_t rank = 0; rank < g; ++rank) {
            if (gallery_labels[order[rank]] == label) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(rank + 1);
            }
        }
        ap_sum += ap / static_cast<double>(positives);
        ++res.scored;
    }

    if (res.scored == 0) throw NumericError("retrieval score undefined: every query skipped");
    res.value = ap_sum / static_cast<double>(res.scored);
    return res;
}

DenseMatrix embed_dataset(const MlpModel& model, const LabeledDataset& ds) {
    ds.validate();
    return embed_forward(model, ds.features).out;
}

MapResult self_test(const MlpModel& model, const LabeledDataset& query,
                    const LabeledDataset& gallery) {
    return mean_average_precision(embed_dataset(model, query), query.labels,
                                  embed_dataset(model, gallery), gallery.labels);
}

MapResult cross_test(const MlpModel& query_model, const MlpModel& gallery_model,
                     const LabeledDataset& query, const LabeledDataset& gallery) {
    return mean_average_precision(embed_dataset(query_model, query), query.labels,
                                  embed_dataset(gallery_model, gallery), gallery.labels);
}

double p_comp(double m_new_old, double m_old_old, double m_star_star) {
    const double denom = m_star_star - m_old_old;
    if (denom == 0.0) {
        throw NumericError("compatibility gain undefined: reference self-test equals old");
    }
    return logistic((m_new_old - m_old_old) / denom);
}

double p_up(double m_new_new, double m_star_star) {
    if (!(m_star_star > 0.0)) {
        throw NumericError("update gain undefined: reference self-test is not positive");
    }
    return logistic((m_new_new - m_star_star) / m_star_star);
}

double p_beta_score(double comp, double up, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and > 0");
    const double b2 = beta * beta;
    const double denom = b2 * comp + up;
    if (denom == 0.0) throw NumericError("combined gain undefined: zero denominator");
    return (1.0 + b2) * comp * up / denom;
}

RetrievalReport aggregate_report(const std::vector<TestSetMaps>& sets, double beta) {
    if (sets.empty()) throw ConfigError("at least one test set is required");
    RetrievalReport report;
    report.sets = sets;
    report.beta = beta;
    double comp_sum = 0.0;
    double up_sum = 0.0;
    double combined_sum = 0.0;
    for (const TestSetMaps& s : sets) {
        const double comp = p_comp(s.cross, s.self_old, s.self_star);
        const double up = p_up(s.self_new, s.self_star);
        comp_sum += comp;
        up_sum += up;
        combined_sum += p_beta_score(comp, up, beta);
    }
    const double inv = 100.0 / static_cast<double>(sets.size());
    report.p_comp = comp_sum * inv;
    report.p_up = up_sum * inv;
    report.p_beta_score = combined_sum * inv;
    return report;
}

BackfillCurve backfill_curve(const MlpModel& old_model, const MlpModel& new_model,
                             const LabeledDataset& query, const LabeledDataset& gallery,
                             const std::vector<double>& fractions, std::uint64_t seed) {
    if (fractions.size() < 2) throw ConfigError("backfill needs at least two fractions");
    if (fractions.front() != 0.0 || fractions.back() != 1.0) {
        throw ConfigError("backfill fractions must start at 0 and end at 1");
    }
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!std::isfinite(fractions[i]) || fractions[i] < 0.0 || fractions[i] > 1.0) {
            throw ConfigError("backfill fractions must lie in [0, 1]");
        }
        if (i > 0 && !(fractions[i] > fractions[i - 1])) {
            throw ConfigError("backfill fractions must be strictly increasing");
        }
    }
    if (old_model.emb_dim() != new_model.emb_dim()) {
        throw ShapeError("old and new embedding dimensions differ");
    }

    const DenseMatrix qe = embed_dataset(new_model, query);
    const DenseMatrix ge_old = embed_dataset(old_model, gallery);
    const DenseMatrix ge_new = embed_dataset(new_model, gallery);
    const std::size_t g = gallery.size();
    SeededRng rng(seed);
    const std::vector<std::size_t> refresh_order = rng.permutation(g);

    BackfillCurve curve;
    curve.reserve(fractions.size());
    for (double rho : fractions) {
        const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(g)));
        DenseMatrix mixed = ge_old;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t row = refresh_order[i];
            for (std::size_t j = 0; j < mixed.cols; ++j) {
                mixed.at(row, j) = ge_new.at(row, j);
            }
        }
        curve.push_back({rho, mean_average_precision(qe, query.labels, mixed,
                                                     gallery.labels).value});
    }
    return curve;
}

void write_backfill_csv(const std::string& path, const BackfillCurve& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "rho,map\n";
    for (const BackfillPoint& p : curve) {
        out << format_double(p.rho) << ',' << format_double(p.map) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace advbct
