// SPDX-License-Identifier: Apache-2.0

#include "tip/influence/model.hpp"

#include <cmath>

#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/gradients.hpp"

namespace tip::influence {

namespace {

double sigmoid(double t) {
    return t >= 0 ? 1.0 / (1.0 + std::exp(-t))
                  : std::exp(t) / (1.0 + std::exp(t));
}

Eigen::VectorXd apply_activation(Activation a, const Eigen::VectorXd& v) {
    switch (a) {
        case Activation::ReLU:
            return v.cwiseMax(0.0);
        case Activation::Sigmoid:
            return v.unaryExpr([](double t) { return sigmoid(t); });
        case Activation::Identity:
            return v;
    }
    fail(ErrorCode::InvalidParams, "unknown activation");
}

/// Numerically safe log(1 + exp(t)).
double softplus(double t) {
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& f) {
    const Eigen::VectorXd shifted = f.array() - f.maxCoeff();
    Eigen::VectorXd e = shifted.array().exp();
    return e / e.sum();
}

}  // namespace

std::size_t Model::param_count() const {
    std::size_t d = 0;
    for (const auto& l : layers) d += l.W.size() + l.b.size();
    return d;
}

bool Model::is_convex() const {
    return layers.size() == 1;  // linear model under a convex head loss
}

void Model::validate() const {
    if (layers.empty()) fail(ErrorCode::InvalidParams, "model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].W.rows() != layers[i].b.size())
            fail(ErrorCode::InvalidParams, "bias/weight row mismatch");
        if (i > 0 && layers[i].W.cols() != layers[i - 1].W.rows())
            fail(ErrorCode::InvalidParams, "layer dimensions do not chain");
    }
    if (head == Head::BinaryLogistic && output_dim() != 1)
        fail(ErrorCode::InvalidParams, "binary logistic head needs 1 logit");
}

Eigen::VectorXd Model::flatten() const {
    Eigen::VectorXd theta(param_count());
    Eigen::Index pos = 0;
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                theta[pos++] = l.W(r, c);
        for (Eigen::Index r = 0; r < l.b.size(); ++r) theta[pos++] = l.b[r];
    }
    return theta;
}

void Model::unflatten(const Eigen::VectorXd& theta) {
    if (static_cast<std::size_t>(theta.size()) != param_count())
        fail(ErrorCode::DimensionMismatch, "theta size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                l.W(r, c) = theta[pos++];
        for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = theta[pos++];
    }
}

ForwardTrace forward(const Model& m, const Eigen::VectorXd& x) {
    if (x.size() != m.input_dim())
        fail(ErrorCode::DimensionMismatch, "feature dimension mismatch");
    ForwardTrace t;
    Eigen::VectorXd cur = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        t.inputs.push_back(cur);
        Eigen::VectorXd z = m.layers[i].W * cur + m.layers[i].b;
        t.pre.push_back(z);
        cur = (i + 1 < m.layers.size()) ? apply_activation(m.activation, z)
                                        : z;
    }
    t.logits = cur;
    return t;
}

double head_loss(const Model& m, const Eigen::VectorXd& logits, double label) {
    switch (m.head) {
        case Head::BinaryLogistic: {
            const double f = logits[0];
            // -[y log p + (1-y) log(1-p)] = softplus(f) - y*f
            return softplus(f) - label * f;
        }
        case Head::Softmax: {
            const int y = static_cast<int>(label);
            const Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
            const double logz = std::log(shifted.array().exp().sum());
            return logz - shifted[y];
        }
        case Head::SquaredError: {
            const Eigen::VectorXd r =
                logits.array() - label;  // broadcast target
            return 0.5 * r.squaredNorm();
        }
    }
    fail(ErrorCode::InvalidParams, "unknown head");
}

Eigen::VectorXd head_delta(const Model& m, const Eigen::VectorXd& logits,
                           double label) {
    switch (m.head) {
        case Head::BinaryLogistic: {
            Eigen::VectorXd d(1);
            d[0] = sigmoid(logits[0]) - label;
            return d;
        }
        case Head::Softmax: {
            Eigen::VectorXd d = softmax(logits);
            d[static_cast<int>(label)] -= 1.0;
            return d;
        }
        case Head::SquaredError:
            return logits.array() - label;
    }
    fail(ErrorCode::InvalidParams, "unknown head");
}

Eigen::MatrixXd head_curvature(const Model& m, const Eigen::VectorXd& logits,
                               double label) {
    (void)label;
    switch (m.head) {
        case Head::BinaryLogistic: {
            const double p = sigmoid(logits[0]);
            Eigen::MatrixXd h(1, 1);
            h(0, 0) = p * (1.0 - p);
            return h;
        }
        case Head::Softmax: {
            const Eigen::VectorXd p = softmax(logits);
            return Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
        }
        case Head::SquaredError:
            return Eigen::MatrixXd::Identity(logits.size(), logits.size());
    }
    fail(ErrorCode::InvalidParams, "unknown head");
}

double example_loss(const Model& m, const Example& z) {
    const ForwardTrace t = forward(m, z.features);
    double reg = 0.0;
    for (const auto& l : m.layers)
        reg += l.W.squaredNorm() + l.b.squaredNorm();
    return head_loss(m, t.logits, z.label) + 0.5 * m.l2 * reg;
}

double mean_loss(const Model& m, const Dataset& data) {
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    double s = 0.0;
    for (const auto& z : data) s += example_loss(m, z);
    return s / static_cast<double>(data.size());
}

namespace {

Model init_model(const Dataset& data, const TrainConfig& cfg) {
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    Model m;
    m.activation = cfg.activation;
    m.head = cfg.head;
    m.l2 = cfg.l2;
    Rng rng = make_rng(derive_seed(cfg.seed, 0x747261696eULL));  // "train"
    std::normal_distribution<double> gauss(0.0, 1.0);
    int in_dim = static_cast<int>(data.front().features.size());
    std::vector<int> dims = cfg.hidden_dims;
    dims.push_back(cfg.output_dim);
    for (int out_dim : dims) {
        DenseLayer l;
        const double s = 1.0 / std::sqrt(static_cast<double>(in_dim));
        l.W = Eigen::MatrixXd::NullaryExpr(
            out_dim, in_dim, [&]() { return s * gauss(rng); });
        l.b = Eigen::VectorXd::Zero(out_dim);
        m.layers.push_back(std::move(l));
        in_dim = out_dim;
    }
    m.validate();
    return m;
}

void gradient_step(Model& m, const Dataset& data, double lr, bool head_only) {
    const Eigen::VectorXd g = risk_gradient(m, data);
    Eigen::VectorXd theta = m.flatten();
    if (head_only) {
        // only the last layer's slice of the canonical flattening moves
        const std::size_t head_params = m.layers.back().W.size() +
                                        m.layers.back().b.size();
        const Eigen::Index start =
            static_cast<Eigen::Index>(m.param_count() - head_params);
        theta.tail(theta.size() - start) -= lr * g.tail(theta.size() - start);
    } else {
        theta -= lr * g;
    }
    m.unflatten(theta);
}

/// Damped Newton polish for convex configurations.
void newton_polish(Model& m, const Dataset& data, double tol) {
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::VectorXd g = risk_gradient(m, data);
        if (g.norm() <= tol) return;
        Eigen::MatrixXd h = risk_hessian(m, data);
        // tiny ridge keeps the factorization stable when l2 = 0
        h.diagonal().array() += 1e-12;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        if (ldlt.info() != Eigen::Success)
            fail(ErrorCode::SingularHessian, "Newton step factorization failed");
        const Eigen::VectorXd step = ldlt.solve(g);
        const Eigen::VectorXd theta = m.flatten();
        const double base = mean_loss(m, data);
        double t = 1.0;
        for (int back = 0; back < 40; ++back) {
            m.unflatten(theta - t * step);
            if (mean_loss(m, data) <= base) break;
            t *= 0.5;
        }
    }
}

}  // namespace

Model train(const Dataset& data, const TrainConfig& cfg) {
    Model m = init_model(data, cfg);
    for (int e = 0; e < cfg.epochs; ++e)
        gradient_step(m, data, cfg.lr, /*head_only=*/false);
    if (m.is_convex()) {
        newton_polish(m, data, cfg.grad_tol);
        if (risk_gradient(m, data).norm() > cfg.grad_tol)
            fail(ErrorCode::DidNotConverge,
                 "convex training missed the gradient tolerance");
    }
    m.theta_hat_flag = true;
    return m;
}

Model fine_tune(const Model& m, const Dataset& data, double lr, int epochs,
                bool head_only) {
    Model out = m;
    for (int e = 0; e < epochs; ++e)
        gradient_step(out, data, lr, head_only);
    return out;
}

}  // namespace tip::influence
