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
#include "advbct/model.hpp"

namespace advbct {

// Old-model geometry of one class: cluster center of its old embeddings, the
// maximum embedding-to-center distance, and the learnable boundary weight
// (stored as a logit so w = logistic(w_logit) stays in (0,1)).
struct ClassGeometry {
    std::int64_t class_id = 0;
    std::vector<double> center;
    double r_max = 0.0;
    double w_logit = 0.0;

    double w() const { return logistic(w_logit); }
};

// One geometry entry per class present in `labels`, sorted by class id.
// Centers are arithmetic means (not re-normalized); r_max is the largest
// distance from an embedding of the class to its center; w_logit starts at 0.
std::vector<ClassGeometry> compute_class_geometry(const DenseMatrix& old_embeddings,
                                                  const std::vector<int>& labels);

// Geometry container file: same tensor format as checkpoints, holding
// class_ids (C x 1), centers (C x d_emb), r_max (C x 1), w_logit (C x 1).
void save_geometry(const std::string& path, const std::vector<ClassGeometry>& geometry);
std::vector<ClassGeometry> load_geometry(const std::string& path);

struct TriangleBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// Bounds on ||a - b|| obtained from both distances to a common reference
// point: lower = ||a-E|| - ||b-E||, upper = ||a-E|| + ||b-E||.
TriangleBounds triangle_bounds(std::span<const double> phi_n_x,
                               std::span<const double> phi_o_y,
                               std::span<const double> center);

// Elastic per-class boundary, interpolated between r_max and the threshold t
// by w in (0,1):
//   t <  r_max: (1-w)*r_max + w*t
//   t >  r_max: w*r_max + (1-w)*t
//   t == r_max: t
// Always inside [min(t, r_max), max(t, r_max)].
double effective_boundary(double r_max, double t, double w);

struct CompatLossConfig {
    double lambda = 1.0;        // weight of the point-to-set term
    double gamma0 = 1.0;        // initial weight of the adversarial term
    int gamma_horizon = 30;     // epochs for the linear decay of gamma
    double t = 0.4;             // boundary threshold
    double grl_beta = 1.0;      // gradient reversal coefficient

    void validate() const;
};

// gamma(e) = gamma0 * max(0, 1 - e/horizon); horizon 0 collapses to gamma0 at
// epoch 0 and 0 afterwards.
double gamma_at(int epoch, const CompatLossConfig& cfg);

struct P2sLossResult {
    double loss = 0.0;
    DenseMatrix d_embeddings;           // same shape as the input embeddings
    std::vector<double> d_w_logits;     // aligned with the geometry list
};

// Hinge penalty on new embeddings farther from their class's old center than
// the elastic boundary. Samples of classes without geometry contribute zero.
// Subgradient at the hinge point is zero.
P2sLossResult p2s_loss(const DenseMatrix& new_embeddings, const std::vector<int>& labels,
                       const std::vector<ClassGeometry>& geometry, double t);

struct ClsLossResult {
    double loss = 0.0;
    DenseMatrix d_logits;
};

// Mean softmax cross-entropy; gradient is (softmax - one_hot)/N.
ClsLossResult cls_loss(const DenseMatrix& logits, const std::vector<int>& labels);

struct AdvLossResult {
    double loss = 0.0;
    std::vector<double> d_q;
};

// Binary cross-entropy of discriminator outputs against origin labels
// (old = 0, new = 1). Probabilities are clamped to [1e-12, 1-1e-12] before
// the logs.
AdvLossResult adv_loss(std::span<const double> q, const std::vector<int>& origin);

struct AblationFlags {
    bool cls = true;
    bool adv = true;
    bool p2s = true;

    bool any() const { return cls || adv || p2s; }
    std::string describe() const;
};

// One batch of the combined objective and every gradient needed for a step.
struct TotalLossResult {
    double total = 0.0;
    double cls_component = 0.0;  // raw L_cls (0 when disabled)
    double adv_component = 0.0;  // raw L_adv
    double p2s_component = 0.0;  // raw L_p2s
    MlpGrads embed_grads;
    Dense classifier_grads;
    DiscGrads discriminator_grads;
    std::vector<double> w_logit_grads;  // aligned with geometry
};

// total = [cls]*L_cls + lambda*[p2s]*L_p2s + gamma*[adv]*L_adv over one batch.
// The discriminator consumes old embeddings (origin 0) then new embeddings
// (origin 1); its own parameter gradients are the plain ones, while the
// gradient flowing back into the new embeddings passes through the reversal
// layer (scaled by -grl_beta).
TotalLossResult total_loss(const DenseMatrix& batch_x, const std::vector<int>& labels,
                           const MlpModel& new_model, const ClassifierHead& classifier,
                           const DiscriminatorHead& discriminator,
                           const DenseMatrix& old_embeddings,
                           const std::vector<ClassGeometry>& geometry,
                           const CompatLossConfig& cfg, int epoch, AblationFlags flags);

}  // namespace advbct
