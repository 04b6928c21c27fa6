#pragma once

#include "dysarar/params.hpp"
#include "dysarar/spatial_algebra.hpp"
#include "dysarar/types.hpp"

#include <cstdint>
#include <optional>

namespace dysarar {

// Scaling of the score by a power of the Fisher information.
//
// gamma = 0 uses the raw chain-rule score J' grad. For gamma in {-1/2, -1}
// the information is estimated by Monte Carlo with fim_draws draws, since no
// closed form is carried here. The selector vector iota_j of the per-unit
// variance score is the j-th canonical basis vector; it never materializes.
struct ScoreConfig {
    double gamma = 0.0;
    std::optional<double> score_clip = 10.0;
    int fim_draws = 100;
    std::uint64_t fim_seed = 0x5eed;

    // Throws InvalidArgument for gamma outside {0, -1/2, -1}, a nonpositive
    // clip or fewer than two draws.
    void validate() const;
};

// rho = L + (U - L) / (1 + exp(-rho~)), likewise lambda; beta = beta~;
// sigma_j = exp(sigma~_j).
[[nodiscard]] NaturalParams map_params(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout);

// In-place variant for hot loops; theta must already have the right shape.
void map_params_into(const Eigen::Ref<const Vector>& tilde, const MappingBounds& bounds, NaturalParams& theta);

// Analytic inverse (logit / log) of map_params.
[[nodiscard]] TildeParams unmap_params(const NaturalParams& theta, const MappingBounds& bounds);

// Logistic image of a single coordinate and its inverse.
[[nodiscard]] double bounded_logistic(double z, double low, double high) noexcept;
[[nodiscard]] double bounded_logit(double v, double low, double high) noexcept;

// Diagonal of the Jacobian d theta / d theta~, with the variance (not the
// standard deviation) as the natural sigma coordinate: d sigma^2 / d sigma~ =
// 2 exp(2 sigma~).
[[nodiscard]] Vector jacobian_diagonal(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout);

// Full (N+K+2) x (N+K+2) Jacobian; diagonal because h_beta is the identity.
[[nodiscard]] Matrix jacobian(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout);

// Exact Gaussian log-density of one cross-section, including -(N/2) ln 2 pi.
[[nodiscard]] double log_likelihood_t(const Vector& y, const Matrix& x, const NaturalParams& theta,
                                      const WeightMatrix& w1, const WeightMatrix& w2);

// Score in natural coordinates (rho, lambda, beta, sigma^2_j).
[[nodiscard]] Vector score_natural(const Vector& y, const Matrix& x, const NaturalParams& theta,
                                   const WeightMatrix& w1, const WeightMatrix& w2);

// Monte Carlo estimate of E[grad grad'] in natural coordinates.
[[nodiscard]] Matrix fisher_information_mc(const NaturalParams& theta, const Matrix& x, const WeightMatrix& w1,
                                           const WeightMatrix& w2, int draws, std::uint64_t seed);

// Applies I~^gamma to a tilde-coordinate score given the natural-coordinate
// information and Jacobian diagonal. Only coordinates flagged in `active`
// take part; the rest come back as zero. Throws NonInvertibleInformation.
[[nodiscard]] Vector scale_tilde_score(const Vector& tilde_score, const Matrix& information_natural,
                                       const Vector& jacobian_diag, double gamma,
                                       const Eigen::Array<bool, Eigen::Dynamic, 1>& active);

// Elementwise clip to +-clip.
void clip_score(Vector& score, std::optional<double> clip) noexcept;

// s~ = I~(theta~)^gamma J' grad, optionally clipped.
[[nodiscard]] Vector scaled_score(const Vector& y, const Matrix& x, const TildeParams& tilde,
                                  const MappingBounds& bounds, const ScoreConfig& config, const WeightMatrix& w1,
                                  const WeightMatrix& w2);

}  // namespace dysarar
