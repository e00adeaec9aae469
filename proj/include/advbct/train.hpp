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

#include "advbct/compat.hpp"
#include "advbct/data.hpp"
#include "advbct/model.hpp"

namespace advbct {

struct TrainConfig {
    int epochs = 30;
    double lr = 0.1;               // initial rate; cosine-decayed to zero
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    AblationFlags flags;           // loss terms for compatible training
    std::vector<std::size_t> hidden = {64};
    std::size_t d_emb = 16;

    void validate() const;
};

// Per-epoch averages of the loss components; gamma is the adversarial weight
// in effect that epoch and total recombines the enabled terms.
struct CurveRow {
    int epoch = 0;
    double l_cls = 0.0;
    double l_adv = 0.0;
    double l_p2s = 0.0;
    double gamma = 0.0;
    double total = 0.0;
};

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve);

struct TrainOldResult {
    MlpModel model;
    ClassifierHead classifier;
    double train_accuracy = 0.0;
    std::vector<CurveRow> curve;
};

// Classification-only training (also used for the independent reference
// model). Deterministic in (dataset, config).
TrainOldResult train_old(const LabeledDataset& train, const TrainConfig& cfg);

struct TrainNewResult {
    MlpModel model;
    ClassifierHead classifier;
    DiscriminatorHead discriminator;
    std::vector<ClassGeometry> geometry;  // with trained boundary weights
    double train_accuracy = 0.0;
    std::vector<CurveRow> curve;
};

// Compatible training against a frozen old model. Every batch runs through
// both models; the discriminator sees equal counts of old- and new-origin
// embeddings, and one SGD step updates the new model, classifier,
// discriminator, and boundary weights together.
TrainNewResult train_new_compatible(const LabeledDataset& train, const MlpModel& old_model,
                                    const std::vector<ClassGeometry>& geometry,
                                    const TrainConfig& cfg, const CompatLossConfig& ccfg);

// Fraction of rows whose top logit matches the label.
double classification_accuracy(const MlpModel& model, const ClassifierHead& classifier,
                               const LabeledDataset& ds);

}  // namespace advbct
