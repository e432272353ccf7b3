// SPDX-License-Identifier: Apache-2.0

#include "tip/influence/influence.hpp"

#include <cmath>

#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"

namespace tip::influence {

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_damped(Eigen::MatrixXd h, double damping) {
    h.diagonal().array() += damping;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        fail(ErrorCode::SingularHessian,
             "damped Hessian is not positive definite");
    return ldlt;
}

/// Fix eigenvector sign: largest-magnitude entry positive, ties broken by
/// the lowest index.
void fix_sign(Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    if (v[best] < 0) v = -v;
}

/// Top-k eigenpairs (descending) from an ascending solver result.
void top_k(const Eigen::VectorXd& evals, const Eigen::MatrixXd& evecs, int k,
           Eigen::MatrixXd& rows_out, Eigen::VectorXd& eigs_out) {
    const Eigen::Index n = evals.size();
    rows_out.resize(k, n);
    eigs_out.resize(k);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd v = evecs.col(n - 1 - i);
        fix_sign(v);
        rows_out.row(i) = v.transpose();
        eigs_out[i] = evals[n - 1 - i];
    }
}

/// Mean projected gradient over a dataset.
Eigen::VectorXd mean_projected(const Model& m, const Dataset& data,
                               const ProjectionOperator& proj) {
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    Eigen::VectorXd g =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(proj.total_dim()));
    for (const auto& z : data)
        g += project_gradient(per_example_gradient(m, z), proj);
    return g / static_cast<double>(data.size());
}

}  // namespace

double exact_influence(const Model& m, const Dataset& train_set,
                       const Example& z_s, const Example& z_eval,
                       double damping) {
    if (damping < 0) fail(ErrorCode::InvalidParams, "damping must be >= 0");
    const Eigen::VectorXd g_s = per_example_gradient(m, z_s).flat();
    const Eigen::VectorXd g_e = per_example_gradient(m, z_eval).flat();
    const auto ldlt = factor_damped(risk_hessian(m, train_set), damping);
    return -g_e.dot(ldlt.solve(g_s));
}

KfacState estimate_kfac(const Model& m, const Dataset& train_set) {
    if (train_set.empty()) fail(ErrorCode::InvalidParams, "empty train set");
    KfacState state;
    state.layers.resize(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Eigen::Index d_in = m.layers[l].W.cols() + 1;
        const Eigen::Index d_out = m.layers[l].W.rows();
        state.layers[l].C_in = Eigen::MatrixXd::Zero(d_in, d_in);
        state.layers[l].C_out = Eigen::MatrixXd::Zero(d_out, d_out);
    }
    for (const auto& z : train_set) {
        const GradientFactors gf = per_example_gradient(m, z);
        for (std::size_t l = 0; l < gf.layers.size(); ++l) {
            const auto& f = gf.layers[l];
            state.layers[l].C_in += f.x_aug * f.x_aug.transpose();
            state.layers[l].C_out += f.delta * f.delta.transpose();
        }
    }
    const double inv_n = 1.0 / static_cast<double>(train_set.size());
    for (auto& l : state.layers) {
        l.C_in *= inv_n;
        l.C_out *= inv_n;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ein(l.C_in);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eout(l.C_out);
        if (ein.info() != Eigen::Success || eout.info() != Eigen::Success)
            fail(ErrorCode::EigSolverFailure, "covariance eigensolve failed");
        l.evals_in = ein.eigenvalues();
        l.evecs_in = ein.eigenvectors();
        l.evals_out = eout.eigenvalues();
        l.evecs_out = eout.eigenvectors();
    }
    return state;
}

std::size_t ProjectionOperator::total_dim() const {
    std::size_t k = 0;
    for (const auto& l : layers) k += l.P_in.rows() * l.P_out.rows();
    return k;
}

ProjectionOperator build_projection(const KfacState& kfac,
                                    const std::vector<int>& k_in,
                                    const std::vector<int>& k_out) {
    if (k_in.size() != kfac.layers.size() || k_out.size() != kfac.layers.size())
        fail(ErrorCode::DimensionMismatch, "per-layer rank list mismatch");
    ProjectionOperator proj;
    for (std::size_t l = 0; l < kfac.layers.size(); ++l) {
        const auto& kl = kfac.layers[l];
        if (k_in[l] < 1 || k_in[l] > kl.C_in.rows() || k_out[l] < 1 ||
            k_out[l] > kl.C_out.rows())
            fail(ErrorCode::InvalidParams, "projection rank out of range");
        ProjectionOperator::LayerProj lp;
        top_k(kl.evals_in, kl.evecs_in, k_in[l], lp.P_in, lp.eig_in);
        top_k(kl.evals_out, kl.evecs_out, k_out[l], lp.P_out, lp.eig_out);
        proj.layers.push_back(std::move(lp));
    }
    return proj;
}

Eigen::VectorXd project_gradient(const GradientFactors& gf,
                                 const ProjectionOperator& proj) {
    if (gf.layers.size() != proj.layers.size())
        fail(ErrorCode::DimensionMismatch, "layer count mismatch");
    Eigen::VectorXd out(static_cast<Eigen::Index>(proj.total_dim()));
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < gf.layers.size(); ++l) {
        const auto& f = gf.layers[l];
        const auto& p = proj.layers[l];
        if (p.P_in.cols() != f.x_aug.size() || p.P_out.cols() != f.delta.size())
            fail(ErrorCode::DimensionMismatch, "projection dimension mismatch");
        // rank-one part: (P_out delta)(P_in x)^T; regularizer projected whole
        Eigen::MatrixXd block =
            (p.P_out * f.delta) * (p.P_in * f.x_aug).transpose();
        block += p.P_out * gf.reg[l] * p.P_in.transpose();
        for (Eigen::Index r = 0; r < block.rows(); ++r)
            for (Eigen::Index c = 0; c < block.cols(); ++c)
                out[pos++] = block(r, c);
    }
    return out;
}

EvalVector preconditioned_eval_vector(const Model& m, const Dataset& eval_set,
                                      const ProjectionOperator& proj,
                                      const KfacState& kfac, double damping) {
    (void)kfac;  // eigenvalues travel inside proj, built from this state
    if (damping <= 0)
        fail(ErrorCode::SingularHessian, "damping must be positive");
    Eigen::VectorXd g = mean_projected(m, eval_set, proj);
    const double root = std::sqrt(damping);
    Eigen::Index pos = 0;
    for (const auto& p : proj.layers) {
        for (Eigen::Index r = 0; r < p.P_out.rows(); ++r)
            for (Eigen::Index c = 0; c < p.P_in.rows(); ++c) {
                const double denom =
                    (p.eig_out[r] + root) * (p.eig_in[c] + root);
                if (!(denom > 0))
                    fail(ErrorCode::SingularHessian,
                         "non-positive damped Kronecker eigenvalue");
                g[pos++] /= denom;
            }
    }
    EvalVector v;
    v.values = std::move(g);
    v.provenance = EvalProvenance::KfacPreconditioned;
    v.eval_set_size = static_cast<int>(eval_set.size());
    return v;
}

EvalVector raw_eval_vector(const Model& m, const Dataset& eval_set,
                           const ProjectionOperator& proj) {
    EvalVector v;
    v.values = mean_projected(m, eval_set, proj) *
               static_cast<double>(eval_set.size());
    v.provenance = EvalProvenance::RawGradientSum;
    v.eval_set_size = static_cast<int>(eval_set.size());
    return v;
}

EvalVector exact_hessian_eval_vector(const Model& m, const Dataset& train_set,
                                     const Dataset& eval_set,
                                     const ProjectionOperator& proj,
                                     double damping) {
    if (eval_set.empty()) fail(ErrorCode::InvalidParams, "empty eval set");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m.param_count());
    for (const auto& z : eval_set) g += per_example_gradient(m, z).flat();
    g /= static_cast<double>(eval_set.size());
    const auto ldlt = factor_damped(risk_hessian(m, train_set), damping);
    const Eigen::VectorXd u = ldlt.solve(g);

    // project the dense solution layer by layer: P_out U_aug P_in^T
    EvalVector v;
    v.values.resize(static_cast<Eigen::Index>(proj.total_dim()));
    Eigen::Index theta_pos = 0, out_pos = 0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Eigen::Index d_out = m.layers[l].W.rows();
        const Eigen::Index d_in = m.layers[l].W.cols();
        Eigen::MatrixXd u_aug(d_out, d_in + 1);
        for (Eigen::Index r = 0; r < d_out; ++r)
            for (Eigen::Index c = 0; c < d_in; ++c)
                u_aug(r, c) = u[theta_pos++];
        for (Eigen::Index r = 0; r < d_out; ++r)
            u_aug(r, d_in) = u[theta_pos++];
        const auto& p = proj.layers[l];
        const Eigen::MatrixXd block = p.P_out * u_aug * p.P_in.transpose();
        for (Eigen::Index r = 0; r < block.rows(); ++r)
            for (Eigen::Index c = 0; c < block.cols(); ++c)
                v.values[out_pos++] = block(r, c);
    }
    v.provenance = EvalProvenance::KfacPreconditioned;
    v.eval_set_size = static_cast<int>(eval_set.size());
    return v;
}

double influence_score(const EvalVector& v_eval, const Eigen::VectorXd& g) {
    if (v_eval.values.size() != g.size())
        fail(ErrorCode::DimensionMismatch, "score dimension mismatch");
    return -v_eval.values.dot(g);
}

double cosine_score(const Eigen::VectorXd& g_seller,
                    const Eigen::VectorXd& g_eval) {
    if (g_seller.size() != g_eval.size())
        fail(ErrorCode::DimensionMismatch, "cosine dimension mismatch");
    const double ns = g_seller.norm(), ne = g_eval.norm();
    if (ns == 0.0 || ne == 0.0)
        fail(ErrorCode::ZeroVector, "cosine of a zero vector");
    return g_seller.dot(g_eval) / (ns * ne);
}

double random_score(std::uint64_t seed, std::uint64_t i) {
    Rng rng = make_rng(derive_seed(seed, 0x726e64ULL, i));  // "rnd"
    std::normal_distribution<double> gauss(0.0, 1.0);
    return gauss(rng);
}

double group_value(const std::vector<double>& scores,
                   const std::vector<std::size_t>& subset) {
    // quad-precision accumulation keeps the sum order-independent at double
    // precision, so disjoint unions are exactly additive
    __float128 s = 0.0;
    for (std::size_t i : subset) {
        if (i >= scores.size())
            fail(ErrorCode::InvalidParams, "subset index out of range");
        s += scores[i];
    }
    return static_cast<double>(s);
}

}  // namespace tip::influence
