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

#include <algorithm>
#include <cmath>
#include <vector>

#include "advbct/compat.hpp"
#include "advbct/gradcheck.hpp"
#include "advbct/model.hpp"
#include "advbct/rng.hpp"
#include "test_support.hpp"

// Central-difference checks for every differentiable piece. Each builder
// resamples its random configuration until all rectifier preactivations and
// hinge margins sit well away from their kinks (1e-3, versus the 1e-5 probe
// step), so the finite-difference oracle is valid at the sampled point.

namespace advbct::testing {

constexpr double kKinkMargin = 1e-3;

struct GradCase {
    MlpModel model;                     // the trainable embedding model
    DenseMatrix x;                      // batch inputs
    ClassifierHead classifier;
    DiscriminatorHead discriminator;
    DenseMatrix old_emb;                // frozen old embeddings for the batch
    std::vector<int> labels;
    std::vector<ClassGeometry> geometry;
    CompatLossConfig cfg;
    int epoch = 1;
};

inline bool relu_margins_ok(const MlpModel& model, const DenseMatrix& x) {
    const EmbedTape tape = embed_forward(model, x);
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        for (double v : tape.preacts[l].values) {
            if (std::abs(v) < kKinkMargin) return false;
        }
    }
    for (double n : tape.row_norms) {
        if (n < 10 * kKinkMargin) return false;
    }
    return true;
}

inline bool disc_margins_ok(const DiscriminatorHead& head, const DenseMatrix& z) {
    const DiscTape tape = discriminate_forward(head, z);
    for (double v : tape.hidden_pre.values) {
        if (std::abs(v) < kKinkMargin) return false;
    }
    for (double logit : tape.logits) {
        if (std::abs(logit) > 25.0) return false;
    }
    return true;
}

inline bool p2s_margins_ok(const DenseMatrix& emb, const std::vector<int>& labels,
                           const std::vector<ClassGeometry>& geometry, double t,
                           bool require_active) {
    bool any_active = false;
    for (std::size_t i = 0; i < emb.rows; ++i) {
        const ClassGeometry& g = geometry[static_cast<std::size_t>(labels[i])];
        const double dist = euclidean_distance(emb.row(i), g.center);
        const double boundary = effective_boundary(g.r_max, t, g.w());
        if (std::abs(dist - boundary) < kKinkMargin) return false;
        if (dist > boundary) any_active = true;
    }
    return !require_active || any_active;
}

// One fully-populated random configuration; deterministic in `seed`. Draws
// whose forward pass degenerates (near-zero pre-normalization row) or sits
// too close to a kink are rejected and redrawn.
inline GradCase make_grad_case(std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) try {
        SeededRng rng(SeededRng(seed).fork(attempt).seed());
        GradCase c;
        const std::size_t d_in = 5, d_emb = 4, classes = 4, n = 6;
        SeededRng model_rng = rng.fork(0);
        c.model = init_mlp({d_in, 6, d_emb}, model_rng);
        SeededRng cls_rng = rng.fork(1);
        c.classifier = init_classifier(classes, d_emb, cls_rng);
        SeededRng disc_rng = rng.fork(2);
        c.discriminator = init_discriminator(d_emb, disc_rng);
        SeededRng data_rng = rng.fork(3);
        c.x = random_matrix(n, d_in, data_rng, 1.5);
        c.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            c.labels[i] = static_cast<int>(data_rng.uniform_int(classes));
        }
        // Frozen "old" embeddings: any unit rows work.
        c.old_emb = DenseMatrix(n, d_emb);
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> row =
                l2_normalize(random_vector(d_emb, data_rng, 1.0));
            for (std::size_t j = 0; j < d_emb; ++j) c.old_emb.at(i, j) = row[j];
        }
        c.geometry.resize(classes);
        for (std::size_t k = 0; k < classes; ++k) {
            c.geometry[k].class_id = static_cast<std::int64_t>(k);
            c.geometry[k].center = l2_normalize(random_vector(d_emb, data_rng, 1.0));
            c.geometry[k].r_max = 0.3 + 0.8 * data_rng.uniform();
            c.geometry[k].w_logit = 2.0 * data_rng.uniform() - 1.0;
        }
        c.cfg.lambda = 0.5 + data_rng.uniform();
        c.cfg.gamma0 = 0.5 + data_rng.uniform();
        c.cfg.gamma_horizon = 10;
        c.cfg.t = 0.2 + 0.6 * data_rng.uniform();
        c.cfg.grl_beta = 0.5 + data_rng.uniform();
        c.epoch = 1 + static_cast<int>(data_rng.uniform_int(8));

        if (!relu_margins_ok(c.model, c.x)) continue;
        const EmbedTape tape = embed_forward(c.model, c.x);
        if (!p2s_margins_ok(tape.out, c.labels, c.geometry, c.cfg.t, true)) continue;
        DenseMatrix both(2 * n, d_emb);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d_emb; ++j) {
                both.at(i, j) = c.old_emb.at(i, j);
                both.at(n + i, j) = tape.out.at(i, j);
            }
        }
        if (!disc_margins_ok(c.discriminator, both)) continue;
        return c;
    } catch (const NumericError&) {
        continue;  // degenerate forward pass; redraw
    }
}

inline std::vector<double> read_params(const std::vector<double*>& ptrs) {
    std::vector<double> out(ptrs.size());
    for (std::size_t i = 0; i < ptrs.size(); ++i) out[i] = *ptrs[i];
    return out;
}

inline void write_params(const std::vector<double*>& ptrs, const std::vector<double>& v) {
    for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = v[i];
}

inline std::vector<double> flatten_grads(const MlpGrads& grads) {
    std::vector<double> out;
    for (const Dense& g : grads) {
        out.insert(out.end(), g.w.values.begin(), g.w.values.end());
        out.insert(out.end(), g.b.begin(), g.b.end());
    }
    return out;
}

inline std::vector<double> flatten_grads(const Dense& g) {
    std::vector<double> out(g.w.values.begin(), g.w.values.end());
    out.insert(out.end(), g.b.begin(), g.b.end());
    return out;
}

inline std::vector<double> flatten_grads(const DiscGrads& g) {
    std::vector<double> out = flatten_grads(g.l1);
    const std::vector<double> l2 = flatten_grads(g.l2);
    out.insert(out.end(), l2.begin(), l2.end());
    return out;
}

// Gradient of a scalar of the embedding output w.r.t. all model parameters.
inline double check_embed_gradient(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    SeededRng coef_rng(SeededRng(seed).fork(99).seed());
    const EmbedTape probe = embed_forward(c.model, c.x);
    const DenseMatrix coef = random_matrix(probe.out.rows, probe.out.cols, coef_rng);

    const EmbedTape tape = embed_forward(c.model, c.x);
    const MlpGrads grads = embed_backward(c.model, tape, coef);
    const std::vector<double> analytic = flatten_grads(grads);

    const std::vector<double*> ptrs = parameter_pointers(c.model);
    const std::vector<double> x0 = read_params(ptrs);
    const auto f = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        const EmbedTape t = embed_forward(c.model, c.x);
        double s = 0.0;
        for (std::size_t i = 0; i < t.out.values.size(); ++i) {
            s += coef.values[i] * t.out.values[i];
        }
        return s;
    };
    const std::vector<double> numeric = finite_difference_gradient(f, x0);
    write_params(ptrs, x0);
    return gradient_relative_error(analytic, numeric);
}

// Normalization Jacobian in isolation: a single affine layer into the
// normalizer, gradients w.r.t. the layer inputs.
inline double check_norm_jacobian(std::uint64_t seed) {
    SeededRng rng(seed);
    MlpModel model;
    SeededRng init_rng = rng.fork(0);
    model.layers.push_back(init_dense(4, 4, init_rng));
    SeededRng data_rng = rng.fork(1);
    DenseMatrix x = random_matrix(2, 4, data_rng, 1.0);
    const DenseMatrix coef = random_matrix(2, 4, data_rng);

    const EmbedTape tape = embed_forward(model, x);
    DenseMatrix d_input;
    embed_backward(model, tape, coef, &d_input);

    std::vector<double*> ptrs;
    for (double& v : x.values) ptrs.push_back(&v);
    const std::vector<double> x0 = read_params(ptrs);
    const auto f = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        const EmbedTape t = embed_forward(model, x);
        double s = 0.0;
        for (std::size_t i = 0; i < t.out.values.size(); ++i) {
            s += coef.values[i] * t.out.values[i];
        }
        return s;
    };
    const std::vector<double> numeric = finite_difference_gradient(f, x0);
    write_params(ptrs, x0);
    return gradient_relative_error(d_input.values, numeric);
}

// Classifier affine layer, via the cross-entropy loss.
inline double check_classifier_gradient(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    const DenseMatrix emb = embed_forward(c.model, c.x).out;

    const DenseMatrix logits = classify_forward(c.classifier, emb);
    const ClsLossResult loss = cls_loss(logits, c.labels);
    const Dense grads = classify_backward(c.classifier, emb, loss.d_logits);

    const std::vector<double*> ptrs = parameter_pointers(c.classifier.lin);
    const std::vector<double> x0 = read_params(ptrs);
    const auto f = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        return cls_loss(classify_forward(c.classifier, emb), c.labels).loss;
    };
    const std::vector<double> numeric = finite_difference_gradient(f, x0);
    write_params(ptrs, x0);
    return gradient_relative_error(flatten_grads(grads), numeric);
}

// Discriminator parameters via the origin-classification loss.
inline double check_discriminator_gradient(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    const std::size_t n = c.x.rows;
    const DenseMatrix emb = embed_forward(c.model, c.x).out;
    DenseMatrix both(2 * n, emb.cols);
    std::vector<int> origin(2 * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < emb.cols; ++j) {
            both.at(i, j) = c.old_emb.at(i, j);
            both.at(n + i, j) = emb.at(i, j);
        }
        origin[n + i] = 1;
    }

    const DiscTape tape = discriminate_forward(c.discriminator, both);
    const AdvLossResult loss = adv_loss(tape.q, origin);
    const DiscGrads grads = discriminate_backward(c.discriminator, tape, loss.d_q);

    const std::vector<double*> ptrs = parameter_pointers(c.discriminator);
    const std::vector<double> x0 = read_params(ptrs);
    const auto f = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        const DiscTape t = discriminate_forward(c.discriminator, both);
        return adv_loss(t.q, origin).loss;
    };
    const std::vector<double> numeric = finite_difference_gradient(f, x0);
    write_params(ptrs, x0);
    return gradient_relative_error(flatten_grads(grads), numeric);
}

// Reversal routing: the gradient reaching the embedding parameters through
// the reversal layer must equal -beta times the plain chain-rule gradient of
// the discriminator path.
inline double check_grl_routing(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    const double beta = c.cfg.grl_beta;
    const std::vector<double*> ptrs = parameter_pointers(c.model);
    const std::vector<double> x0 = read_params(ptrs);

    // Plain (unreversed) finite-difference gradient of the adversarial loss
    // of the new-embedding half w.r.t. the embedding parameters.
    std::vector<int> origin(c.x.rows, 1);
    const auto f_plain = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        const DenseMatrix emb = embed_forward(c.model, c.x).out;
        const DiscTape t = discriminate_forward(c.discriminator, emb);
        return adv_loss(t.q, origin).loss;
    };
    const std::vector<double> numeric_plain = finite_difference_gradient(f_plain, x0);
    write_params(ptrs, x0);

    // Backward pass with the reversal layer in the path.
    const EmbedTape tape = embed_forward(c.model, c.x);
    const DiscTape disc_tape = discriminate_forward(c.discriminator, tape.out);
    const AdvLossResult loss = adv_loss(disc_tape.q, origin);
    DenseMatrix d_emb;
    discriminate_backward(c.discriminator, disc_tape, loss.d_q, &d_emb);
    const DenseMatrix reversed = grl_backward(d_emb, GrlConfig{beta});
    const MlpGrads grads = embed_backward(c.model, tape, reversed);
    const std::vector<double> analytic = flatten_grads(grads);

    std::vector<double> expected(numeric_plain.size());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = -beta * numeric_plain[i];
    return gradient_relative_error(analytic, expected);
}

// Hinge loss against the elastic boundaries: gradients w.r.t. the embeddings
// themselves and w.r.t. the boundary-weight logits.
inline double check_p2s_gradients(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    DenseMatrix emb = embed_forward(c.model, c.x).out;

    const P2sLossResult res = p2s_loss(emb, c.labels, c.geometry, c.cfg.t);

    std::vector<double*> emb_ptrs;
    for (double& v : emb.values) emb_ptrs.push_back(&v);
    const std::vector<double> e0 = read_params(emb_ptrs);
    const auto f_emb = [&](const std::vector<double>& p) {
        write_params(emb_ptrs, p);
        return p2s_loss(emb, c.labels, c.geometry, c.cfg.t).loss;
    };
    const std::vector<double> numeric_emb = finite_difference_gradient(f_emb, e0);
    write_params(emb_ptrs, e0);
    const double err_emb = gradient_relative_error(res.d_embeddings.values, numeric_emb);

    std::vector<double*> w_ptrs;
    for (ClassGeometry& g : c.geometry) w_ptrs.push_back(&g.w_logit);
    const std::vector<double> w0 = read_params(w_ptrs);
    const auto f_w = [&](const std::vector<double>& p) {
        write_params(w_ptrs, p);
        return p2s_loss(emb, c.labels, c.geometry, c.cfg.t).loss;
    };
    const std::vector<double> numeric_w = finite_difference_gradient(f_w, w0);
    write_params(w_ptrs, w0);
    const double err_w = gradient_relative_error(res.d_w_logits, numeric_w);

    return std::max(err_emb, err_w);
}

// Cross-entropy gradient w.r.t. the logits.
inline double check_cls_loss_gradient(std::uint64_t seed) {
    GradCase c = make_grad_case(seed);
    DenseMatrix logits = classify_forward(c.classifier, embed_forward(c.model, c.x).out);
    const ClsLossResult res = cls_loss(logits, c.labels);

    std::vector<double*> ptrs;
    for (double& v : logits.values) ptrs.push_back(&v);
    const std::vector<double> x0 = read_params(ptrs);
    const auto f = [&](const std::vector<double>& p) {
        write_params(ptrs, p);
        return cls_loss(logits, c.labels).loss;
    };
    const std::vector<double> numeric = finite_difference_gradient(f, x0);
    write_params(ptrs, x0);
    return gradient_relative_error(res.d_logits.values, numeric);
}

// Binary cross-entropy gradient w.r.t. the probabilities.
inline double check_adv_loss_gradient(std::uint64_t seed) {
    SeededRng rng(seed);
    const std::size_t n = 8;
    std::vector<double> q(n);
    std::vector<int> origin(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = 0.05 + 0.9 * rng.uniform();
        origin[i] = static_cast<int>(rng.uniform_int(2));
    }
    const AdvLossResult res = adv_loss(q, origin);
    const auto f = [&](const std::vector<double>& p) { return adv_loss(p, origin).loss; };
    const std::vector<double> numeric = finite_difference_gradient(f, q);
    return gradient_relative_error(res.d_q, numeric);
}

// The combined objective: every parameter group at once. The adversarial
// contribution to the embedding parameters is reversed in the backward pass,
// so the finite-difference target for those parameters is
// FD(cls + lambda*p2s) - beta * FD(gamma*adv).
inline double check_total_loss_gradients(std::uint64_t seed, AblationFlags flags) {
    GradCase c = make_grad_case(seed);
    const double gamma = gamma_at(c.epoch, c.cfg);

    const TotalLossResult res = total_loss(c.x, c.labels, c.model, c.classifier,
                                           c.discriminator, c.old_emb, c.geometry, c.cfg,
                                           c.epoch, flags);
    double worst = 0.0;

    const auto eval_term = [&](bool use_cls, bool use_p2s, bool use_adv) {
        double s = 0.0;
        const EmbedTape tape = embed_forward(c.model, c.x);
        if (use_cls) {
            s += cls_loss(classify_forward(c.classifier, tape.out), c.labels).loss;
        }
        if (use_p2s) {
            s += c.cfg.lambda * p2s_loss(tape.out, c.labels, c.geometry, c.cfg.t).loss;
        }
        if (use_adv) {
            const std::size_t n = c.x.rows;
            DenseMatrix both(2 * n, tape.out.cols);
            std::vector<int> origin(2 * n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < tape.out.cols; ++j) {
                    both.at(i, j) = c.old_emb.at(i, j);
                    both.at(n + i, j) = tape.out.at(i, j);
                }
                origin[n + i] = 1;
            }
            s += gamma * adv_loss(discriminate_forward(c.discriminator, both).q, origin).loss;
        }
        return s;
    };

    // Embedding parameters.
    {
        const std::vector<double*> ptrs = parameter_pointers(c.model);
        const std::vector<double> x0 = read_params(ptrs);
        std::vector<double> expected(x0.size(), 0.0);
        if (flags.cls || flags.p2s) {
            const auto f = [&](const std::vector<double>& p) {
                write_params(ptrs, p);
                return eval_term(flags.cls, flags.p2s, false);
            };
            const std::vector<double> fd = finite_difference_gradient(f, x0);
            write_params(ptrs, x0);
            for (std::size_t i = 0; i < fd.size(); ++i) expected[i] += fd[i];
        }
        if (flags.adv) {
            const auto f = [&](const std::vector<double>& p) {
                write_params(ptrs, p);
                return eval_term(false, false, true);
            };
            const std::vector<double> fd = finite_difference_gradient(f, x0);
            write_params(ptrs, x0);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                expected[i] += -c.cfg.grl_beta * fd[i];
            }
        }
        worst = std::max(worst,
                         gradient_relative_error(flatten_grads(res.embed_grads), expected));
    }

    // Classifier parameters (only the classification term touches them).
    if (flags.cls) {
        const std::vector<double*> ptrs = parameter_pointers(c.classifier.lin);
        const std::vector<double> x0 = read_params(ptrs);
        const auto f = [&](const std::vector<double>& p) {
            write_params(ptrs, p);
            return eval_term(true, false, false);
        };
        const std::vector<double> fd = finite_difference_gradient(f, x0);
        write_params(ptrs, x0);
        worst = std::max(worst,
                         gradient_relative_error(flatten_grads(res.classifier_grads), fd));
    }

    // Discriminator parameters (plain, not reversed).
    if (flags.adv) {
        const std::vector<double*> ptrs = parameter_pointers(c.discriminator);
        const std::vector<double> x0 = read_params(ptrs);
        const auto f = [&](const std::vector<double>& p) {
            write_params(ptrs, p);
            return eval_term(false, false, true);
        };
        const std::vector<double> fd = finite_difference_gradient(f, x0);
        write_params(ptrs, x0);
        worst = std::max(
            worst, gradient_relative_error(flatten_grads(res.discriminator_grads), fd));
    }

    // Boundary-weight logits (only the point-to-set term).
    if (flags.p2s) {
        std::vector<double*> ptrs;
        for (ClassGeometry& g : c.geometry) ptrs.push_back(&g.w_logit);
        const std::vector<double> x0 = read_params(ptrs);
        const auto f = [&](const std::vector<double>& p) {
            write_params(ptrs, p);
            return eval_term(false, true, false);
        };
        const std::vector<double> fd = finite_difference_gradient(f, x0);
        write_params(ptrs, x0);
        worst = std::max(worst, gradient_relative_error(res.w_logit_grads, fd));
    }

    return worst;
}

// The whole battery for one seed; returns the worst relative error seen.
inline double run_gradient_suite(std::uint64_t seed) {
    double worst = 0.0;
    worst = std::max(worst, check_embed_gradient(seed));
    worst = std::max(worst, check_norm_jacobian(seed));
    worst = std::max(worst, check_classifier_gradient(seed));
    worst = std::max(worst, check_discriminator_gradient(seed));
    worst = std::max(worst, check_grl_routing(seed));
    worst = std::max(worst, check_p2s_gradients(seed));
    worst = std::max(worst, check_cls_loss_gradient(seed));
    worst = std::max(worst, check_adv_loss_gradient(seed));
    AblationFlags all;
    worst = std::max(worst, check_total_loss_gradients(seed, all));
    AblationFlags cls_p2s;
    cls_p2s.adv = false;
    worst = std::max(worst, check_total_loss_gradients(seed, cls_p2s));
    return worst;
}

}  // namespace advbct::testing
