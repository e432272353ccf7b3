// SPDX-License-Identifier: Apache-2.0

#include "tip/influence/gradients.hpp"

#include <cmath>

#include "tip/common/error.hpp"

namespace tip::influence {

namespace {

Eigen::VectorXd activation_derivative(Activation a, const Eigen::VectorXd& pre) {
    switch (a) {
        case Activation::ReLU:
            return pre.unaryExpr([](double t) { return t > 0 ? 1.0 : 0.0; });
        case Activation::Sigmoid:
            return pre.unaryExpr([](double t) {
                const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t))
                                        : std::exp(t) / (1.0 + std::exp(t));
                return s * (1.0 - s);
            });
        case Activation::Identity:
            return Eigen::VectorXd::Ones(pre.size());
    }
    fail(ErrorCode::InvalidParams, "unknown activation");
}

/// Backpropagate an error vector seeded at the logits through the trace,
/// yielding one (x_aug, delta) pair per layer.
std::vector<GradientFactors::LayerFactors> backprop(
    const Model& m, const ForwardTrace& t, const Eigen::VectorXd& seed) {
    const std::size_t L = m.layers.size();
    std::vector<GradientFactors::LayerFactors> out(L);
    Eigen::VectorXd delta = seed;
    for (std::size_t i = L; i-- > 0;) {
        Eigen::VectorXd x_aug(t.inputs[i].size() + 1);
        x_aug << t.inputs[i], 1.0;
        out[i].x_aug = std::move(x_aug);
        out[i].delta = delta;
        if (i > 0) {
            delta = m.layers[i].W.transpose() * delta;
            delta.array() *=
                activation_derivative(m.activation, t.pre[i - 1]).array();
        }
    }
    return out;
}

/// Flat gradient (canonical order, no regularizer) from backprop factors.
Eigen::VectorXd assemble_flat(const Model& m,
                              const std::vector<GradientFactors::LayerFactors>&
                                  factors) {
    Eigen::VectorXd g(m.param_count());
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto& f = factors[i];
        const Eigen::Index d_in = f.x_aug.size() - 1;
        for (Eigen::Index r = 0; r < f.delta.size(); ++r)
            for (Eigen::Index c = 0; c < d_in; ++c)
                g[pos++] = f.delta[r] * f.x_aug[c];
        for (Eigen::Index r = 0; r < f.delta.size(); ++r)
            g[pos++] = f.delta[r];
    }
    return g;
}

void check_param_limit(const Model& m) {
    if (m.param_count() > 2000)
        fail(ErrorCode::InvalidParams,
             "dense Hessian path limited to d <= 2000 parameters");
}

}  // namespace

Eigen::VectorXd GradientFactors::flat() const {
    std::size_t d = 0;
    for (const auto& r : reg) d += r.size();
    Eigen::VectorXd g(d);
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& f = layers[i];
        const Eigen::Index d_in = f.x_aug.size() - 1;
        for (Eigen::Index r = 0; r < f.delta.size(); ++r)
            for (Eigen::Index c = 0; c < d_in; ++c)
                g[pos++] = f.delta[r] * f.x_aug[c] + reg[i](r, c);
        for (Eigen::Index r = 0; r < f.delta.size(); ++r)
            g[pos++] = f.delta[r] + reg[i](r, d_in);
    }
    return g;
}

Eigen::VectorXd GradientFactors::flat_aug() const {
    std::size_t d = 0;
    for (const auto& r : reg) d += r.size();
    Eigen::VectorXd g(d);
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& f = layers[i];
        for (Eigen::Index r = 0; r < f.delta.size(); ++r)
            for (Eigen::Index c = 0; c < f.x_aug.size(); ++c)
                g[pos++] = f.delta[r] * f.x_aug[c] + reg[i](r, c);
    }
    return g;
}

GradientFactors per_example_gradient(const Model& m, const Example& z) {
    const ForwardTrace t = forward(m, z.features);
    GradientFactors gf;
    gf.layers = backprop(m, t, head_delta(m, t.logits, z.label));
    for (const auto& l : m.layers) {
        Eigen::MatrixXd r(l.W.rows(), l.W.cols() + 1);
        r << l.W, l.b;
        gf.reg.push_back(m.l2 * r);
    }
    return gf;
}

Eigen::VectorXd risk_gradient(const Model& m, const Dataset& data) {
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m.param_count());
    for (const auto& z : data) g += per_example_gradient(m, z).flat();
    return g / static_cast<double>(data.size());
}

Eigen::MatrixXd example_hessian(const Model& m, const Example& z) {
    check_param_limit(m);
    const ForwardTrace t = forward(m, z.features);
    const Eigen::Index c_dim = t.logits.size();
    const Eigen::Index d = static_cast<Eigen::Index>(m.param_count());

    // Jacobian of the logits w.r.t. theta, one backprop per output unit
    Eigen::MatrixXd jac(c_dim, d);
    for (Eigen::Index c = 0; c < c_dim; ++c) {
        Eigen::VectorXd seed = Eigen::VectorXd::Zero(c_dim);
        seed[c] = 1.0;
        jac.row(c) = assemble_flat(m, backprop(m, t, seed)).transpose();
    }
    const Eigen::MatrixXd hh = head_curvature(m, t.logits, z.label);
    Eigen::MatrixXd h = jac.transpose() * hh * jac;
    h.diagonal().array() += m.l2;
    return h;
}

Eigen::MatrixXd risk_hessian(const Model& m, const Dataset& data) {
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    check_param_limit(m);
    const Eigen::Index d = static_cast<Eigen::Index>(m.param_count());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    for (const auto& z : data) h += example_hessian(m, z);
    return h / static_cast<double>(data.size());
}

}  // namespace tip::influence
