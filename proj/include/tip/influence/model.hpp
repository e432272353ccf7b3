// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_INFLUENCE_MODEL_HPP
#define TIP_INFLUENCE_MODEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace tip::influence {

/// One labeled data point. For classification heads the label is a class
/// index stored as a double; for SquaredError it is the regression target.
struct Example {
    Eigen::VectorXd features;
    double label = 0.0;
};

using Dataset = std::vector<Example>;

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1, Sigmoid = 2 };
enum class Head : std::uint8_t {
    BinaryLogistic = 0,
    Softmax = 1,
    SquaredError = 2,
};

struct DenseLayer {
    Eigen::MatrixXd W;  // d_out x d_in
    Eigen::VectorXd b;  // d_out
};

/// Small dense network. The activation applies between layers; the last
/// layer emits raw logits consumed by the head loss. The per-example loss
/// l(z; theta) includes the (l2/2)*||theta||^2 regularizer so that the
/// empirical risk is exactly the mean of per-example losses.
struct Model {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::Identity;
    Head head = Head::BinaryLogistic;
    double l2 = 0.0;
    bool theta_hat_flag = false;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
    std::size_t param_count() const;
    bool is_convex() const;  // linear model (no hidden layer)

    /// Throws InvalidParams when layer dimensions do not chain.
    void validate() const;

    /// Parameters in canonical flattening order: layer order, row-major
    /// weights, then bias.
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& theta);
};

/// Intermediate activations kept for backprop: inputs[i] feeds layer i,
/// pre[i] is layer i's pre-activation output, logits the final output.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> inputs;
    std::vector<Eigen::VectorXd> pre;
    Eigen::VectorXd logits;
};

ForwardTrace forward(const Model& m, const Eigen::VectorXd& x);

/// Head loss at given logits (no regularizer).
double head_loss(const Model& m, const Eigen::VectorXd& logits, double label);
/// dl/dlogits at the head.
Eigen::VectorXd head_delta(const Model& m, const Eigen::VectorXd& logits,
                           double label);
/// d^2 l / dlogits^2 (Gauss-Newton inner block), PSD by construction.
Eigen::MatrixXd head_curvature(const Model& m, const Eigen::VectorXd& logits,
                               double label);

/// Full per-example loss l(z; theta) = head loss + (l2/2)*||theta||^2.
double example_loss(const Model& m, const Example& z);
/// Mean of example_loss over the set (the regularized empirical risk R_n,
/// and also L_eval when applied to an evaluation set).
double mean_loss(const Model& m, const Dataset& data);

struct TrainConfig {
    std::vector<int> hidden_dims;  // empty -> linear (convex) model
    Activation activation = Activation::Sigmoid;
    Head head = Head::BinaryLogistic;
    int output_dim = 1;
    double lr = 0.5;
    int epochs = 200;
    double l2 = 1e-2;
    std::uint64_t seed = 1;
    double grad_tol = 1e-8;  // convex convergence requirement
};

/// Deterministic full-batch training. Convex configurations (no hidden
/// layers) are polished with damped Newton steps and must reach grad_tol,
/// otherwise DidNotConverge is thrown.
Model train(const Dataset& data, const TrainConfig& config);

/// Gradient-descent fine-tuning from the current parameters; when
/// head_only is set only the last layer moves. One epoch = one full-batch
/// step. Returns the updated model (input left untouched).
Model fine_tune(const Model& m, const Dataset& data, double lr, int epochs,
                bool head_only);

}  // namespace tip::influence

#endif  // TIP_INFLUENCE_MODEL_HPP
