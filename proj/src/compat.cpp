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

#include "advbct/compat.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "advbct/checkpoint.hpp"
#include "advbct/errors.hpp"

namespace advbct {

std::vector<ClassGeometry> compute_class_geometry(const DenseMatrix& old_embeddings,
                                                  const std::vector<int>& labels) {
    if (old_embeddings.rows != labels.size()) {
        throw ShapeError("compute_class_geometry: rows != labels");
    }
    if (labels.empty()) {
        throw ConfigError("compute_class_geometry: empty class set");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    std::vector<ClassGeometry> geometry;
    geometry.reserve(by_class.size());
    const std::size_t d = old_embeddings.cols;
    for (const auto& [cls, rows] : by_class) {
        ClassGeometry g;
        g.class_id = cls;
        g.center.assign(d, 0.0);
        for (std::size_t r : rows) {
            for (std::size_t j = 0; j < d; ++j) g.center[j] += old_embeddings.at(r, j);
        }
        for (double& c : g.center) c /= static_cast<double>(rows.size());
        g.r_max = 0.0;
        for (std::size_t r : rows) {
            g.r_max = std::max(g.r_max, euclidean_distance(old_embeddings.row(r), g.center));
        }
        g.w_logit = 0.0;
        geometry.push_back(std::move(g));
    }
    return geometry;
}

void save_geometry(const std::string& path, const std::vector<ClassGeometry>& geometry) {
    const std::size_t c = geometry.size();
    const std::size_t d = c > 0 ? geometry.front().center.size() : 0;
    DenseMatrix ids(c, 1), centers(c, d), r_max(c, 1), w_logit(c, 1);
    for (std::size_t i = 0; i < c; ++i) {
        ids.at(i, 0) = static_cast<double>(geometry[i].class_id);
        for (std::size_t j = 0; j < d; ++j) centers.at(i, j) = geometry[i].center[j];
        r_max.at(i, 0) = geometry[i].r_max;
        w_logit.at(i, 0) = geometry[i].w_logit;
    }
    save_tensors(path, {{"class_ids", ids},
                        {"centers", centers},
                        {"r_max", r_max},
                        {"w_logit", w_logit}});
}

std::vector<ClassGeometry> load_geometry(const std::string& path) {
    const std::vector<NamedTensor> tensors = load_tensors(path);
    const NamedTensor *ids = nullptr, *centers = nullptr, *r_max = nullptr, *w_logit = nullptr;
    for (const NamedTensor& t : tensors) {
        if (t.name == "class_ids") ids = &t;
        else if (t.name == "centers") centers = &t;
        else if (t.name == "r_max") r_max = &t;
        else if (t.name == "w_logit") w_logit = &t;
    }
    if (!ids || !centers || !r_max || !w_logit) {
        throw IoError("geometry file missing tensors: " + path);
    }
    const std::size_t c = ids->mat.rows;
    if (centers->mat.rows != c || r_max->mat.rows != c || w_logit->mat.rows != c) {
        throw IoError("geometry file row counts disagree: " + path);
    }
    std::vector<ClassGeometry> geometry(c);
    for (std::size_t i = 0; i < c; ++i) {
        geometry[i].class_id = static_cast<std::int64_t>(ids->mat.at(i, 0));
        geometry[i].center.assign(centers->mat.row(i).begin(), centers->mat.row(i).end());
        geometry[i].r_max = r_max->mat.at(i, 0);
        geometry[i].w_logit = w_logit->mat.at(i, 0);
    }
    return geometry;
}

TriangleBounds triangle_bounds(std::span<const double> phi_n_x,
                               std::span<const double> phi_o_y,
                               std::span<const double> center) {
    const double dn = euclidean_distance(phi_n_x, center);
    const double dold = euclidean_distance(phi_o_y, center);
    return TriangleBounds{dn - dold, dn + dold};
}

double effective_boundary(double r_max, double t, double w) {
    if (t < r_max) return (1.0 - w) * r_max + w * t;
    if (t > r_max) return w * r_max + (1.0 - w) * t;
    return t;
}

void CompatLossConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (!(gamma0 >= 0.0) || !std::isfinite(gamma0)) throw ConfigError("gamma0 must be >= 0");
    if (gamma_horizon < 0) throw ConfigError("gamma_horizon must be >= 0");
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("t must be >= 0");
    if (!(grl_beta >= 0.0) || !std::isfinite(grl_beta)) throw ConfigError("grl_beta must be >= 0");
}

double gamma_at(int epoch, const CompatLossConfig& cfg) {
    if (epoch < 0) throw ConfigError("gamma_at: negative epoch");
    if (cfg.gamma_horizon == 0) return epoch == 0 ? cfg.gamma0 : 0.0;
    const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.gamma_horizon);
    return cfg.gamma0 * std::max(0.0, 1.0 - frac);
}

P2sLossResult p2s_loss(const DenseMatrix& new_embeddings, const std::vector<int>& labels,
                       const std::vector<ClassGeometry>& geometry, double t) {
    if (new_embeddings.rows != labels.size()) {
        throw ShapeError("p2s_loss: rows != labels");
    }
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t g = 0; g < geometry.size(); ++g) {
        index[geometry[g].class_id] = g;
    }

    P2sLossResult res;
    res.d_embeddings = DenseMatrix(new_embeddings.rows, new_embeddings.cols);
    res.d_w_logits.assign(geometry.size(), 0.0);

    for (std::size_t i = 0; i < new_embeddings.rows; ++i) {
        const auto it = index.find(labels[i]);
        if (it == index.end()) continue;  // class unseen by the old model
        const ClassGeometry& g = geometry[it->second];
        if (g.center.size() != new_embeddings.cols) {
            throw ShapeError("p2s_loss: center dim != embedding dim");
        }
        const double dist = euclidean_distance(new_embeddings.row(i), g.center);
        const double w = g.w();
        const double boundary = effective_boundary(g.r_max, t, w);
        const double violation = dist - boundary;
        if (violation <= 0.0) continue;
        res.loss += violation;

        if (dist > 0.0) {
            for (std::size_t j = 0; j < new_embeddings.cols; ++j) {
                res.d_embeddings.at(i, j) +=
                    (new_embeddings.at(i, j) - g.center[j]) / dist;
            }
        }
        // d boundary / dw, then through w = logistic(w_logit).
        double db_dw = 0.0;
        if (t < g.r_max) db_dw = t - g.r_max;
        else if (t > g.r_max) db_dw = g.r_max - t;
        res.d_w_logits[it->second] += -db_dw * w * (1.0 - w);
    }
    return res;
}

ClsLossResult cls_loss(const DenseMatrix& logits, const std::vector<int>& labels) {
    if (logits.rows != labels.size()) {
        throw ShapeError("cls_loss: rows != labels");
    }
    const std::size_t n = logits.rows;
    const std::size_t c = logits.cols;
    ClsLossResult res;
    res.d_logits = DenseMatrix(n, c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw ConfigError("cls_loss: label " + std::to_string(y) + " out of range");
        }
        double max_logit = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) max_logit = std::max(max_logit, logits.at(i, j));
        double sum_exp = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum_exp += std::exp(logits.at(i, j) - max_logit);
        const double log_z = max_logit + std::log(sum_exp);
        loss += log_z - logits.at(i, static_cast<std::size_t>(y));
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(logits.at(i, j) - log_z);
            res.d_logits.at(i, j) =
                (p - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    res.loss = loss / static_cast<double>(n);
    return res;
}

AdvLossResult adv_loss(std::span<const double> q, const std::vector<int>& origin) {
    if (q.size() != origin.size()) {
        throw ShapeError("adv_loss: q size != labels");
    }
    const std::size_t n = q.size();
    constexpr double kEps = 1e-12;
    AdvLossResult res;
    res.d_q.assign(n, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(q[i] >= 0.0) || !(q[i] <= 1.0)) {
            throw NumericError("adv_loss: probability outside [0,1]");
        }
        const double qi = std::clamp(q[i], kEps, 1.0 - kEps);
        const double l = origin[i] != 0 ? 1.0 : 0.0;
        loss += -(l * std::log(qi) + (1.0 - l) * std::log(1.0 - qi));
        res.d_q[i] = (-l / qi + (1.0 - l) / (1.0 - qi)) / static_cast<double>(n);
    }
    res.loss = loss / static_cast<double>(n);
    return res;
}

std::string AblationFlags::describe() const {
    std::string s;
    if (cls) s += "cls";
    if (adv) s += s.empty() ? "adv" : "+adv";
    if (p2s) s += s.empty() ? "p2s" : "+p2s";
    return s.empty() ? "none" : s;
}

TotalLossResult total_loss(const DenseMatrix& batch_x, const std::vector<int>& labels,
                           const MlpModel& new_model, const ClassifierHead& classifier,
                           const DiscriminatorHead& discriminator,
                           const DenseMatrix& old_embeddings,
                           const std::vector<ClassGeometry>& geometry,
                           const CompatLossConfig& cfg, int epoch, AblationFlags flags) {
    if (!flags.any()) {
        throw ConfigError("total_loss: no loss term enabled");
    }
    cfg.validate();
    const double gamma = gamma_at(epoch, cfg);

    const EmbedTape tape = embed_forward(new_model, batch_x);
    const std::size_t n = batch_x.rows;
    const std::size_t d = tape.out.cols;

    TotalLossResult res;
    res.classifier_grads = Dense(classifier.lin.out_dim(), classifier.lin.in_dim());
    res.discriminator_grads.l1 =
        Dense(discriminator.l1.out_dim(), discriminator.l1.in_dim());
    res.discriminator_grads.l2 =
        Dense(discriminator.l2.out_dim(), discriminator.l2.in_dim());
    res.w_logit_grads.assign(geometry.size(), 0.0);

    DenseMatrix d_emb(n, d);  // accumulated loss gradient w.r.t. new embeddings

    if (flags.cls) {
        const DenseMatrix logits = classify_forward(classifier, tape.out);
        ClsLossResult cls = cls_loss(logits, labels);
        res.cls_component = cls.loss;
        res.total += cls.loss;
        DenseMatrix d_emb_cls;
        res.classifier_grads = classify_backward(classifier, tape.out, cls.d_logits, &d_emb_cls);
        for (std::size_t i = 0; i < d_emb.values.size(); ++i) {
            d_emb.values[i] += d_emb_cls.values[i];
        }
    }

    if (flags.p2s) {
        P2sLossResult p2s = p2s_loss(tape.out, labels, geometry, cfg.t);
        res.p2s_component = p2s.loss;
        res.total += cfg.lambda * p2s.loss;
        for (std::size_t i = 0; i < d_emb.values.size(); ++i) {
            d_emb.values[i] += cfg.lambda * p2s.d_embeddings.values[i];
        }
        for (std::size_t g = 0; g < geometry.size(); ++g) {
            res.w_logit_grads[g] = cfg.lambda * p2s.d_w_logits[g];
        }
    }

    if (flags.adv) {
        if (old_embeddings.rows != n || old_embeddings.cols != d) {
            throw ShapeError("total_loss: old/new embedding shapes differ");
        }
        // Old embeddings first (origin 0), then new ones (origin 1).
        DenseMatrix disc_in(2 * n, d);
        std::vector<int> origin(2 * n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                disc_in.at(i, j) = old_embeddings.at(i, j);
                disc_in.at(n + i, j) = tape.out.at(i, j);
            }
            origin[n + i] = 1;
        }
        const DiscTape disc_tape = discriminate_forward(discriminator, disc_in);
        AdvLossResult adv = adv_loss(disc_tape.q, origin);
        res.adv_component = adv.loss;
        res.total += gamma * adv.loss;

        std::vector<double> d_q(adv.d_q.size());
        for (std::size_t i = 0; i < d_q.size(); ++i) d_q[i] = gamma * adv.d_q[i];
        DenseMatrix d_disc_in;
        res.discriminator_grads =
            discriminate_backward(discriminator, disc_tape, d_q, &d_disc_in);

        // Only the new-embedding half reaches the embedding model, through
        // the reversal layer; the old model is frozen.
        DenseMatrix d_new_half(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                d_new_half.at(i, j) = d_disc_in.at(n + i, j);
            }
        }
        const DenseMatrix reversed = grl_backward(d_new_half, GrlConfig{cfg.grl_beta});
        for (std::size_t i = 0; i < d_emb.values.size(); ++i) {
            d_emb.values[i] += reversed.values[i];
        }
    }

    res.embed_grads = embed_backward(new_model, tape, d_emb);
    if (!std::isfinite(res.total)) {
        throw NumericError("total_loss: non-finite loss");
    }
    return res;
}

}  // namespace advbct
