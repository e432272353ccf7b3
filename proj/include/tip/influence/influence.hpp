// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_INFLUENCE_INFLUENCE_HPP
#define TIP_INFLUENCE_INFLUENCE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tip/influence/gradients.hpp"
#include "tip/influence/model.hpp"

namespace tip::influence {

/// Exact influence I(z_s, z_eval) = -g_eval^T (H + lambda*I)^{-1} g_s with
/// H the Gauss-Newton Hessian of the regularized risk (exact for convex
/// heads). Negative values mean upweighting z_s decreases the eval loss.
/// Enforces d <= 2000 so the dense Hessian stays materializable.
double exact_influence(const Model& m, const Dataset& train_set,
                       const Example& z_s, const Example& z_eval,
                       double damping);

/// Per-layer K-FAC covariances over a dataset: C_in = E[x_aug x_aug^T]
/// (inputs augmented with a trailing 1 to fold the bias), C_out = E[dd^T].
struct KfacState {
    struct LayerKfac {
        Eigen::MatrixXd C_in;   // (d_in+1) x (d_in+1)
        Eigen::MatrixXd C_out;  // d_out x d_out
        Eigen::VectorXd evals_in, evals_out;  // ascending
        Eigen::MatrixXd evecs_in, evecs_out;  // columns match evals
    };
    std::vector<LayerKfac> layers;
    double damping = 1e-3;
};

KfacState estimate_kfac(const Model& m, const Dataset& train_set);

/// Per-layer spectral projection. Rows of P_in/P_out are the leading
/// eigenvectors of C_in/C_out in descending eigenvalue order, with the sign
/// fixed so the largest-magnitude entry is positive (ties -> lowest index).
/// eig_in/eig_out keep the matching eigenvalues for preconditioning.
struct ProjectionOperator {
    struct LayerProj {
        Eigen::MatrixXd P_in;   // k_in x (d_in+1)
        Eigen::MatrixXd P_out;  // k_out x d_out
        Eigen::VectorXd eig_in, eig_out;  // descending
    };
    std::vector<LayerProj> layers;

    std::size_t total_dim() const;  // sum of k_in * k_out
};

ProjectionOperator build_projection(const KfacState& kfac,
                                    const std::vector<int>& k_in,
                                    const std::vector<int>& k_out);

/// G_tilde = P_out * delta * (P_in * x_aug)^T + l2 * P_out [W|b] P_in^T per
/// layer, flattened row-major and concatenated; never materializes the full
/// gradient matrix.
Eigen::VectorXd project_gradient(const GradientFactors& gf,
                                 const ProjectionOperator& proj);

enum class EvalProvenance : std::uint8_t {
    RawGradientSum = 0,
    KfacPreconditioned = 1,
};

struct EvalVector {
    Eigen::VectorXd values;  // dimension k
    EvalProvenance provenance = EvalProvenance::KfacPreconditioned;
    int eval_set_size = 0;
};

/// v_eval = H_tilde^{-1} g_tilde_eval where g_tilde_eval is the MEAN
/// projected gradient over the eval set and the inverse is applied in the
/// Kronecker eigenbasis: coordinate (i, j) of each layer block is divided
/// by (eig_out_i + sqrt(lambda)) * (eig_in_j + sqrt(lambda)). The sqrt
/// split makes damping act once per Kronecker product, so lambda -> inf
/// yields v ~ g / lambda.
EvalVector preconditioned_eval_vector(const Model& m, const Dataset& eval_set,
                                      const ProjectionOperator& proj,
                                      const KfacState& kfac, double damping);

/// Sum of projected eval gradients without preconditioning.
EvalVector raw_eval_vector(const Model& m, const Dataset& eval_set,
                           const ProjectionOperator& proj);

/// Reference variant using the exact dense (H + lambda*I)^{-1} instead of
/// K-FAC; at full rank this makes influence_score reproduce the mean
/// exact_influence. Same d <= 2000 limit as exact_influence.
EvalVector exact_hessian_eval_vector(const Model& m, const Dataset& train_set,
                                     const Dataset& eval_set,
                                     const ProjectionOperator& proj,
                                     double damping);

/// s(z_s) = -v_eval^T g_tilde(z_s). Equals the mean exact influence under
/// the exact-Hessian preconditioner at full rank; negative s means the
/// candidate is predicted to reduce the evaluation loss, so the utility
/// used for ranking is -s.
double influence_score(const EvalVector& v_eval, const Eigen::VectorXd& g);

/// Cosine similarity of two (gradient) vectors.
double cosine_score(const Eigen::VectorXd& g_seller,
                    const Eigen::VectorXd& g_eval);

/// Standard normal deviate, reproducible in (seed, i).
double random_score(std::uint64_t seed, std::uint64_t i);

/// Additive group valuation: sum of member utilities (first-order
/// heuristic; exact additivity over disjoint sets by construction).
double group_value(const std::vector<double>& scores,
                   const std::vector<std::size_t>& subset);

}  // namespace tip::influence

#endif  // TIP_INFLUENCE_INFLUENCE_HPP
