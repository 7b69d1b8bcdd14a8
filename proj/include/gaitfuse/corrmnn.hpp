#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "gaitfuse/ingest.hpp"
#include "gaitfuse/numkit.hpp"

namespace gaitfuse::corrmnn {

using ingest::BimodalSample;
using numkit::Matrix;
using numkit::Vector;

// ---------------------------------------------------------------------------
// Multi-gated memory cell
// ---------------------------------------------------------------------------

// Gated recurrent cell with an extra temporary-state path: the usual update
// and reset gates produce candidate h~, the blended state
// c = (1-z)*h~ + z*o_prev is then gated elementwise by sigmoid(ctemp).
struct CellParams {
    Matrix w_update, w_reset, w_cand, w_temp;  // hidden x (hidden + input)
    Vector b_update, b_reset, b_cand, b_temp;  // hidden

    std::size_t hidden() const { return b_update.size(); }
    std::size_t input() const { return w_update.cols() - hidden(); }
};

CellParams make_cell(std::size_t hidden, std::size_t input);

struct CellCache {
    Vector x, o_prev;
    Vector z, r, h_tilde, ctemp, c, gate;  // gate = sigmoid(ctemp)
};

// One step. The cache (when requested) retains every intermediate needed by
// the backward pass.
Vector cell_forward(const CellParams& params, const Vector& x, const Vector& o_prev,
                    CellCache* cache = nullptr);

// Exact reverse-mode step. Parameter gradients accumulate into grad_params;
// grad_x and grad_o_prev are overwritten.
void cell_backward(const CellParams& params, const CellCache& cache,
                   const Vector& grad_o, CellParams& grad_params, Vector& grad_x,
                   Vector& grad_o_prev);

// ---------------------------------------------------------------------------
// Correlation computing unit: two four-layer heads
// ---------------------------------------------------------------------------

struct Affine {
    Matrix w;  // out x in
    Vector b;  // out
};

// Three tanh trunk layers followed by two parallel output layers: class
// logits (C) and the correlation embedding (k_corr).
struct ChannelHead {
    std::array<Affine, 3> trunk;
    Affine class_head;
    Affine corr_head;
};

struct CorrUnitParams {
    ChannelHead ch1, ch2;
};

struct HeadCache {
    Vector input;
    std::array<Vector, 3> activations;  // post-tanh
};

struct HeadOut {
    Vector logits;
    Vector embedding;
};

HeadOut head_forward(const ChannelHead& head, const Vector& input,
                     HeadCache* cache = nullptr);

// Accumulates parameter gradients; returns the gradient wrt the head input.
Vector head_backward(const ChannelHead& head, const HeadCache& cache,
                     const Vector& grad_logits, const Vector& grad_embedding,
                     ChannelHead& grad_head);

struct CorrUnitOut {
    Vector logits1, logits2;  // C each
    Vector h1, h2;            // k_corr each
};

CorrUnitOut corr_unit_forward(const CorrUnitParams& unit, const Vector& o1,
                              const Vector& o2, HeadCache* cache1 = nullptr,
                              HeadCache* cache2 = nullptr);

// ---------------------------------------------------------------------------
// Correlation objective
// ---------------------------------------------------------------------------

// Sum of singular values of the whitened cross-covariance
// T = S11^{-1/2} S12 S22^{-1/2}, with ridge-regularized covariances computed
// from batch-centered views. When grad matrices are supplied they receive the
// exact analytic gradients wrt every (uncentered) batch entry.
double cca_corr(const Matrix& h1, const Matrix& h2, double ridge,
                Matrix* grad_h1 = nullptr, Matrix* grad_h2 = nullptr);

// ---------------------------------------------------------------------------
// Joint loss
// ---------------------------------------------------------------------------

struct JointLoss {
    double l1 = 0.0, l2 = 0.0, l_corr = 0.0, total = 0.0;
    Matrix grad_logits1, grad_logits2;  // d total / d logits, batch mean baked in
    double dtotal_dcorr = 0.0;          // -1 / k_corr
};

// l1 and l2 are batch-mean softmax cross-entropies of the two channels;
// l_corr = -corr / k_corr; total is their sum.
JointLoss joint_loss(const Matrix& logits1, const Matrix& logits2,
                     const std::vector<int>& labels, double corr, std::size_t k_corr);

// ---------------------------------------------------------------------------
// Dual-channel model
// ---------------------------------------------------------------------------

struct CorrmnnConfig {
    std::size_t classes = 4;
    std::size_t hidden = 256;
    std::array<std::size_t, 3> mlp_widths{128, 64, 32};
    std::size_t k_corr = 10;
    double learning_rate = 0.01;
    std::size_t batch_size = 256;
    std::size_t epochs = 50;
    double cca_ridge = 1e-4;
    std::uint64_t seed = 0;
};

struct CorrmnnModel {
    CellParams cell1, cell2;
    CorrUnitParams unit;
    std::size_t classes = 0;
    std::size_t k_corr = 0;
};

CorrmnnModel make_corrmnn(std::size_t input1, std::size_t input2,
                          const CorrmnnConfig& config);

// Per-node cell inputs. Channel 1 contributes one frame per node; channel 2
// frames are grouped into equal contiguous chunks, one flattened chunk per
// node (its frame count must be a multiple of channel 1's).
struct NodeInputs {
    std::vector<Vector> ch1, ch2;  // T entries each
};
NodeInputs node_inputs(const BimodalSample& sample);

struct DcmnnOut {
    std::vector<Vector> o1, o2;          // per-node hidden states
    std::vector<CellCache> cache1, cache2;
};

// Unrolls both channels independently from zero initial state.
DcmnnOut dcmnn_forward(const CellParams& cell1, const CellParams& cell2,
                       const BimodalSample& sample, bool keep_caches = false);

struct TrainReport {
    std::vector<double> loss_curve;  // mean total loss per epoch
    double final_accuracy_ch1 = 0.0;
    double final_accuracy_ch2 = 0.0;
};

// Mini-batch Adam over the joint loss through both cells and the correlation
// unit. Deterministic for a fixed seed (single-threaded, fixed reduction
// order). Non-finite loss aborts with a DivergenceError naming epoch/batch.
CorrmnnModel train_corrmnn(const std::vector<BimodalSample>& train,
                           const CorrmnnConfig& config, TrainReport* report = nullptr);

// Per-node fused temporal features: row i is [h1_i, h2_i], shape T x 2k_corr.
Matrix extract_temporal_features(const CorrmnnModel& model, const BimodalSample& sample);

// Mean class logits across nodes for each channel (diagnostics and baselines).
std::pair<Vector, Vector> mean_channel_logits(const CorrmnnModel& model,
                                              const BimodalSample& sample);

}  // namespace gaitfuse::corrmnn
