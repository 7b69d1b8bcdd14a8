#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gaitfuse/ingest.hpp"
#include "gaitfuse/numkit.hpp"

namespace gaitfuse::sfe {

using ingest::BimodalSample;
using numkit::Matrix;
using numkit::Vector;

// ---------------------------------------------------------------------------
// Window descriptors
// ---------------------------------------------------------------------------

// Eight statistics of a signal: mean, rms, skewness, excess kurtosis,
// waveform factor (rms / mean|x|), crest factor (peak / rms), impulse factor
// (peak / mean|x|) and margin factor (peak / (mean sqrt|x|)^2). Degenerate
// denominators yield 0 for that factor. Requires n >= 2.
std::array<double, 8> time_domain_features(std::span<const double> signal);

// Magnitude spectrum |DFT| of the signal, same length as the input, computed
// with explicit real/imaginary accumulation.
Vector freq_domain_features(std::span<const double> signal);

// Descriptor builders: one descriptor per window frame.
Matrix direct_descriptors(const Matrix& window);         // identity transform
Matrix time_stats_descriptors(const Matrix& window);     // frames x 8
Matrix freq_spectrum_descriptors(const Matrix& window);  // frames x Q

// ---------------------------------------------------------------------------
// Gaussian mixture model (diagonal covariance)
// ---------------------------------------------------------------------------

struct GmmModel {
    std::size_t components = 0;  // K
    std::size_t dims = 0;        // D
    Vector weights;              // K, sums to 1
    Matrix means;                // K x D
    Matrix variances;            // K x D, floored

    double log_density(const double* x) const;  // log of the mixture pdf
};

struct GmmFitOptions {
    std::size_t max_iters = 100;
    double var_floor_rel = 1e-6;  // floor = rel * global per-dim variance
    double rel_tol = 1e-7;        // stop when relative improvement drops below
};

struct GmmFitReport {
    std::vector<double> loglik_trace;  // one entry per EM iteration
    std::size_t reseeded_components = 0;
    std::size_t iterations = 0;
};

// EM fit with k-means++ seeding. Requires T >= K. Collapsed components
// (weight < 1e-8) are re-seeded from the descriptor farthest from the global
// mean and counted in the report.
GmmModel gmm_fit(const Matrix& descriptors, std::size_t k, std::uint64_t seed,
                 const GmmFitOptions& opts = {}, GmmFitReport* report = nullptr);

// Posterior responsibilities of each component for one descriptor, computed
// in log space with max subtraction.
Vector gmm_posteriors(const GmmModel& model, const double* x);

// ---------------------------------------------------------------------------
// Fisher vectors
// ---------------------------------------------------------------------------

struct FisherVector {
    Vector weight_block;    // K - 1 entries, component 0 is the reference
    Vector mean_block;      // K * D
    Vector variance_block;  // K * D
    double strong_ratio = 1.0;

    std::size_t size() const {
        return weight_block.size() + mean_block.size() + variance_block.size();
    }
    Vector concat() const;
};

// Average log-likelihood gradients per mixture parameter, scaled by the
// strong-signal ratio and the closed-form diagonal approximation of the
// inverse-sqrt Fisher information. Pre-normalization.
FisherVector fisher_encode(const GmmModel& model, const Matrix& descriptors,
                           double strong_ratio);

// Per-block signed-square weighting g|g|/L1(block), then global L2
// normalization. Zero blocks stay zero; the zero vector stays zero.
FisherVector group_normalize(const FisherVector& fv);

// ---------------------------------------------------------------------------
// Linear discriminant analysis
// ---------------------------------------------------------------------------

struct LdaModel {
    Matrix projection;       // D_in x d_out
    Matrix class_means;      // C x d_out, projected per-class training means
};

// Generalized eigenvectors of between-class vs within-class scatter, the
// latter ridge-regularized by 1e-6 * trace / D. Requires d_out <= C - 1 and
// at least two samples per class.
LdaModel lda_fit(const Matrix& features, const std::vector<int>& labels,
                 std::size_t d_out);
Vector lda_project(const LdaModel& model, const Vector& feature);

// ---------------------------------------------------------------------------
// Full spatial feature pipeline
// ---------------------------------------------------------------------------

struct SfeModels {
    GmmModel gmm_direct;  // channel-1 frames as-is
    GmmModel gmm_time;    // channel-2 per-frame statistics
    GmmModel gmm_freq;    // channel-2 per-frame spectra
    LdaModel lda;
    double strong_ratio = 1.0;
};

struct SfeFitConfig {
    std::size_t k_direct = 15;
    std::size_t k_time = 20;
    std::size_t k_freq = 20;
    double strong_ratio = 1.0;
    std::size_t d_out = 0;  // 0 means classes - 1
    std::uint64_t seed = 0;
    GmmFitOptions gmm;
};

// Pools descriptors over the training samples, fits the three mixtures, then
// fits LDA on the concatenated normalized encodings.
SfeModels fit_sfe(const std::vector<BimodalSample>& train, const SfeFitConfig& config);

// Concatenated group-normalized encodings of one sample (LDA input).
Vector sfe_encode(const SfeModels& models, const BimodalSample& sample);

// Final spatial feature: LDA projection of sfe_encode.
Vector sfe_pipeline(const SfeModels& models, const BimodalSample& sample);

}  // namespace gaitfuse::sfe
