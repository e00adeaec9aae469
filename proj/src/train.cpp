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

#include "advbct/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <utility>

#include "advbct/errors.hpp"
#include "advbct/rng.hpp"

namespace advbct {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ConfigError("weight_decay must be finite and >= 0");
    }
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (d_emb < 1) throw ConfigError("d_emb must be at least 1");
    for (std::size_t h : hidden) {
        if (h < 1) throw ConfigError("hidden widths must be at least 1");
    }
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "epoch,L_cls,L_adv,L_p2s,gamma,total\n";
    for (const CurveRow& row : curve) {
        out << row.epoch << ',' << format_double(row.l_cls) << ',' << format_double(row.l_adv)
            << ',' << format_double(row.l_p2s) << ',' << format_double(row.gamma) << ','
            << format_double(row.total) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

namespace {

DenseMatrix gather_batch(const DenseMatrix& features, const std::vector<std::size_t>& perm,
                         std::size_t begin, std::size_t end) {
    DenseMatrix out(end - begin, features.cols);
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = features.row(perm[i]);
        double* dst = out.values.data() + (i - begin) * features.cols;
        for (std::size_t j = 0; j < features.cols; ++j) dst[j] = src[j];
    }
    return out;
}

struct LoopResult {
    MlpModel model;
    ClassifierHead classifier;
    DiscriminatorHead discriminator;
    std::vector<ClassGeometry> geometry;
    double train_accuracy = 0.0;
    std::vector<CurveRow> curve;
};

// Shared optimization loop. Stream usage is fixed so that runs which enable
// extra loss terms still initialize the embedding model and classifier
// identically: fork 0 seeds those, fork 1 drives the epoch shuffles, and
// fork 2 seeds the discriminator (consumed only when the adversarial term is
// on). With only the classification term enabled this reduces exactly to
// plain supervised training.
LoopResult run_training(const LabeledDataset& train, const MlpModel* old_model,
                        std::vector<ClassGeometry> geometry, const TrainConfig& cfg,
                        const CompatLossConfig& ccfg, AblationFlags flags) {
    cfg.validate();
    ccfg.validate();
    train.validate();
    if (!flags.any()) throw ConfigError("no loss terms enabled");
    if (flags.adv && old_model == nullptr) {
        throw ConfigError("adversarial term requires a frozen old model");
    }
    if (flags.p2s && geometry.empty()) {
        throw ConfigError("point-to-set term requires class geometry");
    }
    if (old_model != nullptr && old_model->emb_dim() != cfg.d_emb) {
        throw ShapeError("old embedding dimension " + std::to_string(old_model->emb_dim()) +
                         " differs from configured d_emb " + std::to_string(cfg.d_emb));
    }
    if (old_model != nullptr && old_model->in_dim() != train.dim()) {
        throw ShapeError("old model input dimension does not match the training data");
    }

    std::vector<std::size_t> dims;
    dims.push_back(train.dim());
    for (std::size_t h : cfg.hidden) dims.push_back(h);
    dims.push_back(cfg.d_emb);

    SeededRng root(cfg.seed);
    SeededRng init_rng = root.fork(0);
    LoopResult out;
    out.model = init_mlp(dims, init_rng);
    out.classifier = init_classifier(static_cast<std::size_t>(train.class_count), cfg.d_emb,
                                     init_rng);
    SeededRng shuffle_rng = root.fork(1);
    if (flags.adv) {
        SeededRng disc_rng = root.fork(2);
        out.discriminator = init_discriminator(cfg.d_emb, disc_rng);
    }
    out.geometry = std::move(geometry);

    // Boundary weights live in one flat buffer so the optimizer can treat
    // them as a single parameter; the geometry list is refreshed after every
    // step so the loss always sees the current values.
    DenseMatrix w_mat(1, flags.p2s ? out.geometry.size() : 0);
    for (std::size_t i = 0; i < w_mat.cols; ++i) w_mat.values[i] = out.geometry[i].w_logit;

    SgdOptimizer opt(cfg.momentum, cfg.weight_decay);
    const std::size_t n = train.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                          static_cast<double>(cfg.epochs)));
        const std::vector<std::size_t> perm = shuffle_rng.permutation(n);

        CurveRow row;
        row.epoch = epoch;
        row.gamma = flags.adv ? gamma_at(epoch, ccfg) : 0.0;
        std::size_t batches = 0;

        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            DenseMatrix batch_x = gather_batch(train.features, perm, begin, end);
            std::vector<int> labels(end - begin);
            for (std::size_t i = begin; i < end; ++i) labels[i - begin] = train.labels[perm[i]];

            DenseMatrix old_emb;
            if (flags.adv) old_emb = embed_forward(*old_model, batch_x).out;

            TotalLossResult res =
                total_loss(batch_x, labels, out.model, out.classifier, out.discriminator,
                           old_emb, out.geometry, ccfg, epoch, flags);

            std::vector<std::span<double>> params;
            std::vector<std::span<const double>> grads;
            for (std::size_t l = 0; l < out.model.layers.size(); ++l) {
                params.emplace_back(out.model.layers[l].w.values);
                grads.emplace_back(res.embed_grads[l].w.values);
                params.emplace_back(out.model.layers[l].b);
                grads.emplace_back(res.embed_grads[l].b);
            }
            params.emplace_back(out.classifier.lin.w.values);
            grads.emplace_back(res.classifier_grads.w.values);
            params.emplace_back(out.classifier.lin.b);
            grads.emplace_back(res.classifier_grads.b);
            if (flags.adv) {
                params.emplace_back(out.discriminator.l1.w.values);
                grads.emplace_back(res.discriminator_grads.l1.w.values);
                params.emplace_back(out.discriminator.l1.b);
                grads.emplace_back(res.discriminator_grads.l1.b);
                params.emplace_back(out.discriminator.l2.w.values);
                grads.emplace_back(res.discriminator_grads.l2.w.values);
                params.emplace_back(out.discriminator.l2.b);
                grads.emplace_back(res.discriminator_grads.l2.b);
            }
            if (flags.p2s) {
                params.emplace_back(w_mat.values);
                grads.emplace_back(res.w_logit_grads);
            }
            sgd_step(std::move(params), std::move(grads), lr, opt);
            if (flags.p2s) {
                for (std::size_t i = 0; i < w_mat.cols; ++i) {
                    out.geometry[i].w_logit = w_mat.values[i];
                }
            }

            row.l_cls += res.cls_component;
            row.l_adv += res.adv_component;
            row.l_p2s += res.p2s_component;
            row.total += res.total;
            ++batches;
        }

        const double inv = 1.0 / static_cast<double>(batches);
        row.l_cls *= inv;
        row.l_adv *= inv;
        row.l_p2s *= inv;
        row.total *= inv;
        if (!std::isfinite(row.total)) throw NumericError("training diverged: non-finite loss");
        out.curve.push_back(row);
    }

    out.train_accuracy = classification_accuracy(out.model, out.classifier, train);
    return out;
}

}  // namespace

TrainOldResult train_old(const LabeledDataset& train, const TrainConfig& cfg) {
    AblationFlags cls_only;
    cls_only.cls = true;
    cls_only.adv = false;
    cls_only.p2s = false;
    LoopResult res = run_training(train, nullptr, {}, cfg, CompatLossConfig{}, cls_only);
    TrainOldResult out;
    out.model = std::move(res.model);
    out.classifier = std::move(res.classifier);
    out.train_accuracy = res.train_accuracy;
    out.curve = std::move(res.curve);
    return out;
}

TrainNewResult train_new_compatible(const LabeledDataset& train, const MlpModel& old_model,
                                    const std::vector<ClassGeometry>& geometry,
                                    const TrainConfig& cfg, const CompatLossConfig& ccfg) {
    LoopResult res = run_training(train, &old_model, geometry, cfg, ccfg, cfg.flags);
    TrainNewResult out;
    out.model = std::move(res.model);
    out.classifier = std::move(res.classifier);
    out.discriminator = std::move(res.discriminator);
    out.geometry = std::move(res.geometry);
    out.train_accuracy = res.train_accuracy;
    out.curve = std::move(res.curve);
    return out;
}

double classification_accuracy(const MlpModel& model, const ClassifierHead& classifier,
                               const LabeledDataset& ds) {
    ds.validate();
    const DenseMatrix emb = embed_forward(model, ds.features).out;
    const DenseMatrix logits = classify_forward(classifier, emb);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c) {
            if (logits.at(i, c) > logits.at(i, best)) best = c;
        }
        if (static_cast<int>(best) == ds.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

}  // namespace advbct
