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

#include <cstddef>
#include <span>
#include <vector>

#include "advbct/matrix.hpp"
#include "advbct/rng.hpp"

namespace advbct {

// One affine layer, y = x W^T + b. Also reused as the gradient container for
// a layer of the same shape.
struct Dense {
    DenseMatrix w;          // d_out x d_in
    std::vector<double> b;  // d_out

    Dense() = default;
    Dense(std::size_t d_out, std::size_t d_in) : w(d_out, d_in), b(d_out, 0.0) {}

    std::size_t in_dim() const { return w.cols; }
    std::size_t out_dim() const { return w.rows; }
};

// Uniform init in +/- sqrt(6 / (fan_in + fan_out)); biases start at zero.
Dense init_dense(std::size_t d_out, std::size_t d_in, SeededRng& rng);

// MLP embedding network: affine layers with rectifier activations between
// them, final output row-wise L2-normalized.
struct MlpModel {
    std::vector<Dense> layers;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t emb_dim() const { return layers.back().out_dim(); }
};

// dims = {d_in, hidden..., d_emb}; at least one layer.
MlpModel init_mlp(const std::vector<std::size_t>& dims, SeededRng& rng);

// Activation record from a forward pass; everything backward needs.
struct EmbedTape {
    std::vector<DenseMatrix> inputs;    // input to each layer
    std::vector<DenseMatrix> preacts;   // affine output per layer
    DenseMatrix pre_norm;               // last affine output, before normalization
    std::vector<double> row_norms;      // L2 norm per row of pre_norm
    DenseMatrix out;                    // normalized embeddings
};

EmbedTape embed_forward(const MlpModel& model, const DenseMatrix& x);

using MlpGrads = std::vector<Dense>;

MlpGrads zero_grads(const MlpModel& model);

// Exact backward through normalization, rectifiers, and affine layers.
// Returns parameter gradients; d_input is written when non-null.
MlpGrads embed_backward(const MlpModel& model, const EmbedTape& tape,
                        const DenseMatrix& d_out, DenseMatrix* d_input = nullptr);

struct ClassifierHead {
    Dense lin;  // C x d_emb
    std::size_t class_count() const { return lin.out_dim(); }
};

ClassifierHead init_classifier(std::size_t classes, std::size_t d_emb, SeededRng& rng);

DenseMatrix classify_forward(const ClassifierHead& head, const DenseMatrix& z);

// Returns head gradients; d_z written when non-null.
Dense classify_backward(const ClassifierHead& head, const DenseMatrix& z,
                        const DenseMatrix& d_logits, DenseMatrix* d_z = nullptr);

// Two affine layers with a rectifier between; scalar logit per row squashed
// through the logistic, so outputs live in (0,1).
struct DiscriminatorHead {
    Dense l1;  // hidden x d_emb
    Dense l2;  // 1 x hidden
};

DiscriminatorHead init_discriminator(std::size_t d_emb, SeededRng& rng);

struct DiscTape {
    DenseMatrix input;
    DenseMatrix hidden_pre;
    std::vector<double> logits;
    std::vector<double> q;  // logistic(logit) per row
};

DiscTape discriminate_forward(const DiscriminatorHead& head, const DenseMatrix& z);

struct DiscGrads {
    Dense l1;
    Dense l2;
};

// d_q is the loss gradient w.r.t. the probabilities. Returns parameter
// gradients; d_z written when non-null.
DiscGrads discriminate_backward(const DiscriminatorHead& head, const DiscTape& tape,
                                std::span<const double> d_q, DenseMatrix* d_z = nullptr);

struct GrlConfig {
    double beta = 1.0;
};

// Forward is the identity; backward scales the upstream gradient by -beta.
DenseMatrix grl_backward(const DenseMatrix& upstream, const GrlConfig& cfg);

// SGD with momentum and weight decay:
//   v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v.
// Velocity buffers are keyed by registration order, which must be stable
// across steps.
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(std::span<double> param, std::span<const double> grad, double lr,
              std::size_t slot);

    void ensure_slots(std::size_t n) {
        if (velocity_.size() < n) velocity_.resize(n);
    }

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

// One update over parallel parameter/gradient lists, in list order.
void sgd_step(std::vector<std::span<double>> params,
              std::vector<std::span<const double>> grads, double lr,
              SgdOptimizer& opt);

}  // namespace advbct
