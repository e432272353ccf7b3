// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_INFLUENCE_GRADIENTS_HPP
#define TIP_INFLUENCE_GRADIENTS_HPP

#include <Eigen/Dense>
#include <vector>

#include "tip/influence/model.hpp"

namespace tip::influence {

/// Rank-one factorization of a per-example gradient. For every layer the
/// input activation is augmented with a trailing 1 so that delta * x_aug^T
/// reproduces [dW | db] in one outer product; reg carries the layer's
/// l2 * [W | b] contribution (the regularizer term is not rank-one).
struct GradientFactors {
    struct LayerFactors {
        Eigen::VectorXd x_aug;  // layer input, trailing 1 appended
        Eigen::VectorXd delta;  // backpropagated error at the layer output
    };
    std::vector<LayerFactors> layers;
    std::vector<Eigen::MatrixXd> reg;  // per layer, l2 * [W | b]

    /// Flat gradient in canonical order (row-major W, then bias, per layer),
    /// including the regularizer term.
    Eigen::VectorXd flat() const;
    /// Flat gradient with each layer flattened as the augmented matrix
    /// [dW | db] in row-major order (the order projection operators act on).
    Eigen::VectorXd flat_aug() const;
};

GradientFactors per_example_gradient(const Model& m, const Example& z);

/// Gradient of the regularized empirical risk (mean of per-example flats).
Eigen::VectorXd risk_gradient(const Model& m, const Dataset& data);

/// Gauss-Newton Hessian of one example's loss: J^T H_head J + l2*I, in
/// canonical flattening order. Exact for convex (linear-model) heads.
Eigen::MatrixXd example_hessian(const Model& m, const Example& z);

/// Gauss-Newton Hessian of the regularized empirical risk (mean over data).
Eigen::MatrixXd risk_hessian(const Model& m, const Dataset& data);

}  // namespace tip::influence

#endif  // TIP_INFLUENCE_GRADIENTS_HPP
