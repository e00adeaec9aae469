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
#include <string>
#include <vector>

namespace advbct {

// Row-major dense matrix of 64-bit reals. Sums inside every operation run in
// ascending index order so results are bit-stable across runs.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * cols, cols};
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& m);

bool all_finite(const DenseMatrix& m);
bool all_finite(std::span<const double> v);
void require_finite(const DenseMatrix& m, const char* what);

double euclidean_distance(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);

// Normalizes v to unit L2 norm. Throws NumericError when the norm is below
// 1e-12.
std::vector<double> l2_normalize(std::span<const double> v);

double logistic(double x);

// Shortest decimal form that parses back to the same double, so files built
// from it round-trip byte-identically.
std::string format_double(double v);

}  // namespace advbct
