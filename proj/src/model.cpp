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

#include "advbct/model.hpp"

#include <cmath>
#include <string>

#include "advbct/errors.hpp"

namespace advbct {

namespace {

// y = x W^T + b for a batch x (N x d_in).
DenseMatrix affine_forward(const Dense& layer, const DenseMatrix& x) {
    if (x.cols != layer.in_dim()) {
        throw ShapeError("affine: input dim " + std::to_string(x.cols) +
                         " != layer dim " + std::to_string(layer.in_dim()));
    }
    DenseMatrix y(x.rows, layer.out_dim());
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            double s = layer.b[o];
            for (std::size_t k = 0; k < x.cols; ++k) {
                s += x.at(i, k) * layer.w.at(o, k);
            }
            y.at(i, o) = s;
        }
    }
    return y;
}

// Accumulates layer gradients from d_y; writes d_x when non-null.
void affine_backward(const Dense& layer, const DenseMatrix& x, const DenseMatrix& d_y,
                     Dense& grads, DenseMatrix* d_x) {
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            grads.b[o] += d_y.at(i, o);
        }
    }
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                s += d_y.at(i, o) * x.at(i, k);
            }
            grads.w.at(o, k) += s;
        }
    }
    if (d_x) {
        *d_x = DenseMatrix(x.rows, x.cols);
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t k = 0; k < x.cols; ++k) {
                double s = 0.0;
                for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                    s += d_y.at(i, o) * layer.w.at(o, k);
                }
                d_x->at(i, k) = s;
            }
        }
    }
}

DenseMatrix relu(const DenseMatrix& m) {
    DenseMatrix out = m;
    for (double& x : out.values) x = x > 0.0 ? x : 0.0;
    return out;
}

}  // namespace

Dense init_dense(std::size_t d_out, std::size_t d_in, SeededRng& rng) {
    Dense layer(d_out, d_in);
    const double bound = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
    for (double& w : layer.w.values) {
        w = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return layer;
}

MlpModel init_mlp(const std::vector<std::size_t>& dims, SeededRng& rng) {
    if (dims.size() < 2) {
        throw ConfigError("init_mlp: need at least input and output dims");
    }
    MlpModel model;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        model.layers.push_back(init_dense(dims[i + 1], dims[i], rng));
    }
    return model;
}

EmbedTape embed_forward(const MlpModel& model, const DenseMatrix& x) {
    EmbedTape tape;
    DenseMatrix cur = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        tape.inputs.push_back(cur);
        DenseMatrix pre = affine_forward(model.layers[l], cur);
        tape.preacts.push_back(pre);
        cur = (l + 1 < model.layers.size()) ? relu(pre) : pre;
    }
    tape.pre_norm = cur;
    tape.row_norms.resize(cur.rows);
    tape.out = DenseMatrix(cur.rows, cur.cols);
    for (std::size_t i = 0; i < cur.rows; ++i) {
        const double n = l2_norm(cur.row(i));
        if (!(n > 1e-12)) {
            throw NumericError("embed_forward: degenerate embedding row " + std::to_string(i));
        }
        tape.row_norms[i] = n;
        for (std::size_t j = 0; j < cur.cols; ++j) {
            tape.out.at(i, j) = cur.at(i, j) / n;
        }
    }
    require_finite(tape.out, "embed_forward");
    return tape;
}

MlpGrads zero_grads(const MlpModel& model) {
    MlpGrads g;
    for (const Dense& layer : model.layers) {
        g.emplace_back(layer.out_dim(), layer.in_dim());
    }
    return g;
}

MlpGrads embed_backward(const MlpModel& model, const EmbedTape& tape,
                        const DenseMatrix& d_out, DenseMatrix* d_input) {
    // Jacobian of y = z/||z||: dz = (dy - y (y . dy)) / ||z||.
    DenseMatrix d_cur(tape.pre_norm.rows, tape.pre_norm.cols);
    for (std::size_t i = 0; i < tape.pre_norm.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < tape.pre_norm.cols; ++j) {
            dot += tape.out.at(i, j) * d_out.at(i, j);
        }
        for (std::size_t j = 0; j < tape.pre_norm.cols; ++j) {
            d_cur.at(i, j) = (d_out.at(i, j) - tape.out.at(i, j) * dot) / tape.row_norms[i];
        }
    }

    MlpGrads grads = zero_grads(model);
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        if (l + 1 < model.layers.size()) {
            // Rectifier: pass gradient only where the preactivation was positive.
            for (std::size_t idx = 0; idx < d_cur.values.size(); ++idx) {
                if (tape.preacts[l].values[idx] <= 0.0) d_cur.values[idx] = 0.0;
            }
        }
        DenseMatrix d_prev;
        const bool need_input = (l > 0) || (d_input != nullptr);
        affine_backward(model.layers[l], tape.inputs[l], d_cur, grads[l],
                        need_input ? &d_prev : nullptr);
        if (l == 0) {
            if (d_input) *d_input = d_prev;
        } else {
            d_cur = d_prev;
        }
    }
    return grads;
}

ClassifierHead init_classifier(std::size_t classes, std::size_t d_emb, SeededRng& rng) {
    return ClassifierHead{init_dense(classes, d_emb, rng)};
}

DenseMatrix classify_forward(const ClassifierHead& head, const DenseMatrix& z) {
    return affine_forward(head.lin, z);
}

Dense classify_backward(const ClassifierHead& head, const DenseMatrix& z,
                        const DenseMatrix& d_logits, DenseMatrix* d_z) {
    Dense grads(head.lin.out_dim(), head.lin.in_dim());
    affine_backward(head.lin, z, d_logits, grads, d_z);
    return grads;
}

DiscriminatorHead init_discriminator(std::size_t d_emb, SeededRng& rng) {
    DiscriminatorHead head;
    head.l1 = init_dense(d_emb, d_emb, rng);
    head.l2 = init_dense(1, d_emb, rng);
    return head;
}

DiscTape discriminate_forward(const DiscriminatorHead& head, const DenseMatrix& z) {
    DiscTape tape;
    tape.input = z;
    tape.hidden_pre = affine_forward(head.l1, z);
    const DenseMatrix hidden = relu(tape.hidden_pre);
    const DenseMatrix logit_mat = affine_forward(head.l2, hidden);
    tape.logits.resize(z.rows);
    tape.q.resize(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        tape.logits[i] = logit_mat.at(i, 0);
        tape.q[i] = logistic(tape.logits[i]);
    }
    return tape;
}

DiscGrads discriminate_backward(const DiscriminatorHead& head, const DiscTape& tape,
                                std::span<const double> d_q, DenseMatrix* d_z) {
    const std::size_t n = tape.q.size();
    DenseMatrix d_logit(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        d_logit.at(i, 0) = d_q[i] * tape.q[i] * (1.0 - tape.q[i]);
    }

    DiscGrads grads;
    grads.l2 = Dense(1, head.l2.in_dim());
    grads.l1 = Dense(head.l1.out_dim(), head.l1.in_dim());

    DenseMatrix hidden = relu(tape.hidden_pre);
    DenseMatrix d_hidden;
    affine_backward(head.l2, hidden, d_logit, grads.l2, &d_hidden);
    for (std::size_t idx = 0; idx < d_hidden.values.size(); ++idx) {
        if (tape.hidden_pre.values[idx] <= 0.0) d_hidden.values[idx] = 0.0;
    }
    affine_backward(head.l1, tape.input, d_hidden, grads.l1, d_z);
    return grads;
}

DenseMatrix grl_backward(const DenseMatrix& upstream, const GrlConfig& cfg) {
    DenseMatrix out = upstream;
    for (double& x : out.values) x *= -cfg.beta;
    return out;
}

void SgdOptimizer::step(std::span<double> param, std::span<const double> grad,
                        double lr, std::size_t slot) {
    if (param.size() != grad.size()) {
        throw ShapeError("sgd: param/grad size mismatch");
    }
    ensure_slots(slot + 1);
    std::vector<double>& v = velocity_[slot];
    if (v.size() != param.size()) v.assign(param.size(), 0.0);
    for (std::size_t i = 0; i < param.size(); ++i) {
        v[i] = momentum_ * v[i] + grad[i] + weight_decay_ * param[i];
        param[i] -= lr * v[i];
    }
}

void sgd_step(std::vector<std::span<double>> params,
              std::vector<std::span<const double>> grads, double lr,
              SgdOptimizer& opt) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd: param/grad list size mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        opt.step(params[i], grads[i], lr, i);
    }
}

}  // namespace advbct
