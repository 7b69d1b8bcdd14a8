#include "gaitfuse/corrmnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gaitfuse/errors.hpp"
#include "gaitfuse/rng.hpp"

namespace gaitfuse::corrmnn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector concat2(const Vector& a, const Vector& b) {
    Vector out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

Vector affine_apply(const Matrix& w, const Vector& b, const Vector& x) {
    Vector y = numkit::matvec(w, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    return y;
}

// gw += da x^T, gb += da, dx += w^T da
void affine_backward_acc(const Matrix& w, const Vector& da, const Vector& x,
                         Matrix& gw, Vector& gb, Vector& dx) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double d = da[i];
        gb[i] += d;
        double* grow = gw.row(i);
        const double* wrow = w.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            grow[j] += d * x[j];
            dx[j] += wrow[j] * d;
        }
    }
}

void glorot_init(Matrix& w, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
    }
}

Affine make_affine(std::size_t out, std::size_t in, Rng& rng) {
    Affine a;
    a.w = Matrix(out, in);
    a.b.assign(out, 0.0);
    glorot_init(a.w, rng);
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cell
// ---------------------------------------------------------------------------

CellParams make_cell(std::size_t hidden, std::size_t input) {
    CellParams p;
    p.w_update = Matrix(hidden, hidden + input);
    p.w_reset = Matrix(hidden, hidden + input);
    p.w_cand = Matrix(hidden, hidden + input);
    p.w_temp = Matrix(hidden, hidden + input);
    p.b_update.assign(hidden, 0.0);
    p.b_reset.assign(hidden, 0.0);
    p.b_cand.assign(hidden, 0.0);
    p.b_temp.assign(hidden, 0.0);
    return p;
}

Vector cell_forward(const CellParams& params, const Vector& x, const Vector& o_prev,
                    CellCache* cache) {
    const std::size_t hidden = params.hidden();
    if (o_prev.size() != hidden || x.size() != params.input()) {
        throw DimensionError("cell_forward: input/hidden size mismatch");
    }

    const Vector u = concat2(o_prev, x);
    Vector z = affine_apply(params.w_update, params.b_update, u);
    Vector r = affine_apply(params.w_reset, params.b_reset, u);
    for (double& v : z) v = sigmoid(v);
    for (double& v : r) v = sigmoid(v);

    Vector gated_prev(hidden);
    for (std::size_t i = 0; i < hidden; ++i) gated_prev[i] = r[i] * o_prev[i];
    Vector h_tilde = affine_apply(params.w_cand, params.b_cand, concat2(gated_prev, x));
    for (double& v : h_tilde) v = std::tanh(v);

    Vector ctemp = affine_apply(params.w_temp, params.b_temp, u);
    for (double& v : ctemp) v = std::tanh(v);

    Vector c(hidden), gate(hidden), o(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        c[i] = (1.0 - z[i]) * h_tilde[i] + z[i] * o_prev[i];
        gate[i] = sigmoid(ctemp[i]);
        o[i] = c[i] * gate[i];
    }

    if (cache) {
        cache->x = x;
        cache->o_prev = o_prev;
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->h_tilde = std::move(h_tilde);
        cache->ctemp = std::move(ctemp);
        cache->c = std::move(c);
        cache->gate = std::move(gate);
    }
    return o;
}

void cell_backward(const CellParams& params, const CellCache& cache,
                   const Vector& grad_o, CellParams& grad_params, Vector& grad_x,
                   Vector& grad_o_prev) {
    const std::size_t hidden = params.hidden();
    const std::size_t input = params.input();
    if (cache.o_prev.size() != hidden || cache.x.size() != input) {
        throw InputError("cell_backward: cache does not match parameter shapes");
    }
    if (grad_o.size() != hidden) throw DimensionError("cell_backward: grad size mismatch");

    grad_x.assign(input, 0.0);
    grad_o_prev.assign(hidden, 0.0);

    Vector dc(hidden), da_temp(hidden), dz(hidden), dh(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        dc[i] = grad_o[i] * cache.gate[i];
        const double dgate = grad_o[i] * cache.c[i];
        const double dctemp = dgate * cache.gate[i] * (1.0 - cache.gate[i]);
        da_temp[i] = dctemp * (1.0 - cache.ctemp[i] * cache.ctemp[i]);
        dh[i] = dc[i] * (1.0 - cache.z[i]);
        dz[i] = dc[i] * (cache.o_prev[i] - cache.h_tilde[i]);
        grad_o_prev[i] += dc[i] * cache.z[i];
    }

    const Vector u = concat2(cache.o_prev, cache.x);
    Vector du(hidden + input, 0.0);

    // Candidate path: h~ = tanh(W [r*o_prev, x] + b).
    Vector da_cand(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        da_cand[i] = dh[i] * (1.0 - cache.h_tilde[i] * cache.h_tilde[i]);
    }
    Vector gated_prev(hidden);
    for (std::size_t i = 0; i < hidden; ++i) gated_prev[i] = cache.r[i] * cache.o_prev[i];
    Vector dv(hidden + input, 0.0);
    affine_backward_acc(params.w_cand, da_cand, concat2(gated_prev, cache.x),
                        grad_params.w_cand, grad_params.b_cand, dv);
    Vector dr(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        dr[i] = dv[i] * cache.o_prev[i];
        grad_o_prev[i] += dv[i] * cache.r[i];
    }
    for (std::size_t j = 0; j < input; ++j) grad_x[j] += dv[hidden + j];

    // Gates on [o_prev, x].
    Vector da_update(hidden), da_reset(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        da_update[i] = dz[i] * cache.z[i] * (1.0 - cache.z[i]);
        da_reset[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
    }
    affine_backward_acc(params.w_update, da_update, u, grad_params.w_update,
                        grad_params.b_update, du);
    affine_backward_acc(params.w_reset, da_reset, u, grad_params.w_reset,
                        grad_params.b_reset, du);
    affine_backward_acc(params.w_temp, da_temp, u, grad_params.w_temp,
                        grad_params.b_temp, du);

    for (std::size_t i = 0; i < hidden; ++i) grad_o_prev[i] += du[i];
    for (std::size_t j = 0; j < input; ++j) grad_x[j] += du[hidden + j];
}

// ---------------------------------------------------------------------------
// Correlation unit heads
// ---------------------------------------------------------------------------

HeadOut head_forward(const ChannelHead& head, const Vector& input, HeadCache* cache) {
    Vector a = input;
    std::array<Vector, 3> acts;
    for (std::size_t layer = 0; layer < 3; ++layer) {
        a = affine_apply(head.trunk[layer].w, head.trunk[layer].b, a);
        for (double& v : a) v = std::tanh(v);
        acts[layer] = a;
    }
    HeadOut out;
    out.logits = affine_apply(head.class_head.w, head.class_head.b, a);
    out.embedding = affine_apply(head.corr_head.w, head.corr_head.b, a);
    if (cache) {
        cache->input = input;
        cache->activations = std::move(acts);
    }
    return out;
}

Vector head_backward(const ChannelHead& head, const HeadCache& cache,
                     const Vector& grad_logits, const Vector& grad_embedding,
                     ChannelHead& grad_head) {
    const Vector& top = cache.activations[2];
    Vector d_top(top.size(), 0.0);
    affine_backward_acc(head.class_head.w, grad_logits, top, grad_head.class_head.w,
                        grad_head.class_head.b, d_top);
    affine_backward_acc(head.corr_head.w, grad_embedding, top, grad_head.corr_head.w,
                        grad_head.corr_head.b, d_top);

    for (int layer = 2; layer >= 0; --layer) {
        const Vector& act = cache.activations[static_cast<std::size_t>(layer)];
        Vector da(act.size());
        for (std::size_t i = 0; i < act.size(); ++i) da[i] = d_top[i] * (1.0 - act[i] * act[i]);
        const Vector& below =
            layer == 0 ? cache.input : cache.activations[static_cast<std::size_t>(layer - 1)];
        Vector d_below(below.size(), 0.0);
        affine_backward_acc(head.trunk[static_cast<std::size_t>(layer)].w, da, below,
                            grad_head.trunk[static_cast<std::size_t>(layer)].w,
                            grad_head.trunk[static_cast<std::size_t>(layer)].b, d_below);
        d_top = std::move(d_below);
    }
    return d_top;
}

CorrUnitOut corr_unit_forward(const CorrUnitParams& unit, const Vector& o1,
                              const Vector& o2, HeadCache* cache1, HeadCache* cache2) {
    const HeadOut a = head_forward(unit.ch1, o1, cache1);
    const HeadOut b = head_forward(unit.ch2, o2, cache2);
    return {a.logits, b.logits, a.embedding, b.embedding};
}

// ---------------------------------------------------------------------------
// CCA objective
// ---------------------------------------------------------------------------

namespace {

// Column means of an n x k matrix.
Vector col_means(const Matrix& m) {
    Vector mean(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(m.rows());
    return mean;
}

Matrix centered(const Matrix& m, const Vector& mean) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) - mean[j];
    }
    return out;
}

void symmetrize(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    }
}

}  // namespace

double cca_corr(const Matrix& h1, const Matrix& h2, double ridge, Matrix* grad_h1,
                Matrix* grad_h2) {
    const std::size_t n = h1.rows();
    const std::size_t k = h1.cols();
    if (h2.rows() != n || h2.cols() != k) {
        throw DimensionError("cca_corr: view shapes differ");
    }
    if (n < 2) throw InputError("cca_corr: need at least 2 rows");
    if (!numkit::all_finite(h1) || !numkit::all_finite(h2)) {
        throw InputError("cca_corr: non-finite entries");
    }

    const Matrix c1 = centered(h1, col_means(h1));
    const Matrix c2 = centered(h2, col_means(h2));
    const double denom = static_cast<double>(n - 1);

    Matrix s11 = numkit::matmul(numkit::transpose(c1), c1);
    Matrix s22 = numkit::matmul(numkit::transpose(c2), c2);
    Matrix s12 = numkit::matmul(numkit::transpose(c1), c2);
    for (std::size_t i = 0; i < k * k; ++i) {
        s11.data()[i] /= denom;
        s22.data()[i] /= denom;
        s12.data()[i] /= denom;
    }
    symmetrize(s11);
    symmetrize(s22);

    const Matrix w1 = numkit::inv_sqrt_psd(s11, ridge);
    const Matrix w2 = numkit::inv_sqrt_psd(s22, ridge);
    const Matrix t = numkit::matmul(numkit::matmul(w1, s12), w2);

    Matrix ttt = numkit::matmul(numkit::transpose(t), t);
    symmetrize(ttt);
    const auto eig = numkit::sym_eig(ttt);  // V, sigma^2 descending

    Vector sigma(k);
    double corr = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sigma[i] = std::sqrt(std::max(0.0, eig.values[i]));
        corr += sigma[i];
    }

    if (grad_h1 == nullptr && grad_h2 == nullptr) return corr;

    // Left singular vectors: u_j = T v_j / sigma_j; directions with
    // vanishing singular value contribute no gradient.
    const double sigma_tol = 1e-12 * std::max(1.0, sigma.empty() ? 0.0 : sigma[0]);
    Matrix u(k, k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        if (sigma[j] <= sigma_tol) continue;
        for (std::size_t i = 0; i < k; ++i) {
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += t(i, l) * eig.vectors(l, j);
            u(i, j) = acc / sigma[j];
        }
    }

    Matrix udu(k, k, 0.0), vdv(k, k, 0.0), uvt(k, k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double a = 0.0, b = 0.0, c = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                a += u(i, l) * sigma[l] * u(j, l);
                b += eig.vectors(i, l) * sigma[l] * eig.vectors(j, l);
                c += u(i, l) * eig.vectors(j, l);
            }
            udu(i, j) = a;
            vdv(i, j) = b;
            uvt(i, j) = c;
        }
    }

    Matrix delta11 = numkit::matmul(numkit::matmul(w1, udu), w1);
    Matrix delta22 = numkit::matmul(numkit::matmul(w2, vdv), w2);
    for (std::size_t i = 0; i < k * k; ++i) {
        delta11.data()[i] *= -0.5;
        delta22.data()[i] *= -0.5;
    }
    const Matrix delta12 = numkit::matmul(numkit::matmul(w1, uvt), w2);

    const auto emit = [denom](const Matrix& own, const Matrix& own_delta,
                              const Matrix& other, const Matrix& cross, Matrix* out) {
        if (!out) return;
        Matrix g(own.rows(), own.cols(), 0.0);
        for (std::size_t i = 0; i < own.rows(); ++i) {
            for (std::size_t j = 0; j < own.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < own.cols(); ++l) {
                    acc += 2.0 * own(i, l) * own_delta(l, j) + other(i, l) * cross(l, j);
                }
                g(i, j) = acc / denom;
            }
        }
        // Chain through batch centering: subtract the column means.
        const Vector gm = col_means(g);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) -= gm[j];
        }
        *out = std::move(g);
    };
    emit(c1, delta11, c2, numkit::transpose(delta12), grad_h1);
    emit(c2, delta22, c1, delta12, grad_h2);
    return corr;
}

// ---------------------------------------------------------------------------
// Joint loss
// ---------------------------------------------------------------------------

namespace {

// Batch-mean softmax cross-entropy and its gradient wrt logits.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix& grad) {
    const std::size_t n = logits.rows();
    const std::size_t classes = logits.cols();
    grad = Matrix(n, classes, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.row(i);
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw InputError("joint_loss: label " + std::to_string(label) +
                             " out of range for " + std::to_string(classes) + " classes");
        }
        double max_logit = row[0];
        for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - max_logit);
        const double log_sum = std::log(sum) + max_logit;
        loss += log_sum - row[static_cast<std::size_t>(label)];
        for (std::size_t c = 0; c < classes; ++c) {
            grad(i, c) = std::exp(row[c] - log_sum) / static_cast<double>(n);
        }
        grad(i, static_cast<std::size_t>(label)) -= 1.0 / static_cast<double>(n);
    }
    return loss / static_cast<double>(n);
}

}  // namespace

JointLoss joint_loss(const Matrix& logits1, const Matrix& logits2,
                     const std::vector<int>& labels, double corr, std::size_t k_corr) {
    if (logits1.rows() != labels.size() || logits2.rows() != labels.size()) {
        throw DimensionError("joint_loss: logits/labels length mismatch");
    }
    if (k_corr == 0) throw InputError("joint_loss: k_corr must be >= 1");

    JointLoss out;
    out.l1 = cross_entropy(logits1, labels, out.grad_logits1);
    out.l2 = cross_entropy(logits2, labels, out.grad_logits2);
    out.l_corr = -corr / static_cast<double>(k_corr);
    out.dtotal_dcorr = -1.0 / static_cast<double>(k_corr);
    out.total = out.l1 + out.l2 + out.l_corr;
    return out;
}

// ---------------------------------------------------------------------------
// Model assembly and training
// ---------------------------------------------------------------------------

CorrmnnModel make_corrmnn(std::size_t input1, std::size_t input2,
                          const CorrmnnConfig& config) {
    if (config.classes < 1 || config.hidden < 1 || config.k_corr < 1) {
        throw InputError("make_corrmnn: classes, hidden and k_corr must be >= 1");
    }
    Rng rng(config.seed);
    CorrmnnModel m;
    m.classes = config.classes;
    m.k_corr = config.k_corr;

    const auto init_cell = [&rng](CellParams& cell, std::size_t hidden, std::size_t input) {
        cell = make_cell(hidden, input);
        glorot_init(cell.w_update, rng);
        glorot_init(cell.w_reset, rng);
        glorot_init(cell.w_cand, rng);
        glorot_init(cell.w_temp, rng);
    };
    init_cell(m.cell1, config.hidden, input1);
    init_cell(m.cell2, config.hidden, input2);

    const auto init_head = [&](ChannelHead& head) {
        std::size_t in = config.hidden;
        for (std::size_t layer = 0; layer < 3; ++layer) {
            head.trunk[layer] = make_affine(config.mlp_widths[layer], in, rng);
            in = config.mlp_widths[layer];
        }
        head.class_head = make_affine(config.classes, in, rng);
        head.corr_head = make_affine(config.k_corr, in, rng);
    };
    init_head(m.unit.ch1);
    init_head(m.unit.ch2);
    return m;
}

NodeInputs node_inputs(const BimodalSample& sample) {
    const std::size_t nodes = sample.x1.rows();
    if (nodes == 0) throw InputError("node_inputs: empty channel-1 window");
    if (sample.x2.rows() == 0 || sample.x2.rows() % nodes != 0) {
        throw DimensionError("node_inputs: channel-2 frame count " +
                             std::to_string(sample.x2.rows()) +
                             " is not a multiple of node count " + std::to_string(nodes));
    }
    const std::size_t chunk = sample.x2.rows() / nodes;
    const std::size_t q = sample.x2.cols();

    NodeInputs out;
    out.ch1.reserve(nodes);
    out.ch2.reserve(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        out.ch1.push_back(sample.x1.row_vec(i));
        Vector flat;
        flat.reserve(chunk * q);
        for (std::size_t f = 0; f < chunk; ++f) {
            const double* row = sample.x2.row(i * chunk + f);
            flat.insert(flat.end(), row, row + q);
        }
        out.ch2.push_back(std::move(flat));
    }
    return out;
}

DcmnnOut dcmnn_forward(const CellParams& cell1, const CellParams& cell2,
                       const BimodalSample& sample, bool keep_caches) {
    const NodeInputs inputs = node_inputs(sample);
    const std::size_t nodes = inputs.ch1.size();

    DcmnnOut out;
    out.o1.reserve(nodes);
    out.o2.reserve(nodes);
    if (keep_caches) {
        out.cache1.resize(nodes);
        out.cache2.resize(nodes);
    }

    Vector state1(cell1.hidden(), 0.0);
    Vector state2(cell2.hidden(), 0.0);
    for (std::size_t i = 0; i < nodes; ++i) {
        state1 = cell_forward(cell1, inputs.ch1[i], state1,
                              keep_caches ? &out.cache1[i] : nullptr);
        state2 = cell_forward(cell2, inputs.ch2[i], state2,
                              keep_caches ? &out.cache2[i] : nullptr);
        out.o1.push_back(state1);
        out.o2.push_back(state2);
    }
    return out;
}

namespace {

void visit_cell(CellParams& c, std::vector<std::pair<double*, std::size_t>>& out) {
    out.emplace_back(c.w_update.data(), c.w_update.size());
    out.emplace_back(c.w_reset.data(), c.w_reset.size());
    out.emplace_back(c.w_cand.data(), c.w_cand.size());
    out.emplace_back(c.w_temp.data(), c.w_temp.size());
    out.emplace_back(c.b_update.data(), c.b_update.size());
    out.emplace_back(c.b_reset.data(), c.b_reset.size());
    out.emplace_back(c.b_cand.data(), c.b_cand.size());
    out.emplace_back(c.b_temp.data(), c.b_temp.size());
}

void visit_head(ChannelHead& h, std::vector<std::pair<double*, std::size_t>>& out) {
    for (auto& layer : h.trunk) {
        out.emplace_back(layer.w.data(), layer.w.size());
        out.emplace_back(layer.b.data(), layer.b.size());
    }
    out.emplace_back(h.class_head.w.data(), h.class_head.w.size());
    out.emplace_back(h.class_head.b.data(), h.class_head.b.size());
    out.emplace_back(h.corr_head.w.data(), h.corr_head.w.size());
    out.emplace_back(h.corr_head.b.data(), h.corr_head.b.size());
}

std::vector<std::pair<double*, std::size_t>> tensor_views(CorrmnnModel& m) {
    std::vector<std::pair<double*, std::size_t>> out;
    visit_cell(m.cell1, out);
    visit_cell(m.cell2, out);
    visit_head(m.unit.ch1, out);
    visit_head(m.unit.ch2, out);
    return out;
}

CorrmnnModel zero_like(const CorrmnnModel& m) {
    CorrmnnModel z = m;
    for (auto [ptr, n] : tensor_views(z)) std::fill(ptr, ptr + n, 0.0);
    return z;
}

struct AdamState {
    Vector m, v;
    std::size_t t = 0;
};

void adam_step(std::vector<std::pair<double*, std::size_t>>& params,
               std::vector<std::pair<double*, std::size_t>>& grads, AdamState& state,
               double lr) {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;

    std::size_t total = 0;
    for (auto [ptr, n] : params) total += n;
    if (state.m.empty()) {
        state.m.assign(total, 0.0);
        state.v.assign(total, 0.0);
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));

    std::size_t offset = 0;
    for (std::size_t view = 0; view < params.size(); ++view) {
        double* p = params[view].first;
        const double* g = grads[view].first;
        const std::size_t n = params[view].second;
        for (std::size_t i = 0; i < n; ++i) {
            double& m = state.m[offset + i];
            double& v = state.v[offset + i];
            m = kBeta1 * m + (1.0 - kBeta1) * g[i];
            v = kBeta2 * v + (1.0 - kBeta2) * g[i] * g[i];
            p[i] -= lr * (m / c1) / (std::sqrt(v / c2) + kEps);
        }
        offset += n;
    }
}

}  // namespace

CorrmnnModel train_corrmnn(const std::vector<BimodalSample>& train,
                           const CorrmnnConfig& config, TrainReport* report) {
    if (train.empty()) throw InputError("train_corrmnn: empty training set");
    const std::size_t nodes0 = train.front().x1.rows();
    const std::size_t input1 = train.front().x1.cols();
    const std::size_t chunk = train.front().x2.rows() / nodes0;
    const std::size_t input2 = train.front().x2.cols() * chunk;
    for (const auto& s : train) {
        if (s.x1.cols() != input1 || s.x2.cols() * (s.x2.rows() / s.x1.rows()) != input2) {
            throw DimensionError("train_corrmnn: inconsistent sample shapes");
        }
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= config.classes) {
            throw InputError("train_corrmnn: label out of range");
        }
    }

    CorrmnnModel model = make_corrmnn(input1, input2, config);
    CorrmnnModel grads = zero_like(model);
    auto param_views = tensor_views(model);
    auto grad_views = tensor_views(grads);
    AdamState adam;

    Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep.loss_curve.clear();

    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            const std::size_t batch_n = end - start;

            for (auto [ptr, n] : grad_views) std::fill(ptr, ptr + n, 0.0);

            // Forward pass over the batch, keeping every cache.
            struct SampleFwd {
                DcmnnOut dc;
                std::vector<HeadCache> hc1, hc2;
            };
            std::vector<SampleFwd> fwd(batch_n);
            std::size_t total_rows = 0;
            for (std::size_t b = 0; b < batch_n; ++b) {
                const BimodalSample& s = train[order[start + b]];
                fwd[b].dc = dcmnn_forward(model.cell1, model.cell2, s, true);
                const std::size_t t = fwd[b].dc.o1.size();
                fwd[b].hc1.resize(t);
                fwd[b].hc2.resize(t);
                total_rows += t;
            }

            Matrix logits1(total_rows, config.classes);
            Matrix logits2(total_rows, config.classes);
            Matrix h1(total_rows, config.k_corr);
            Matrix h2(total_rows, config.k_corr);
            std::vector<int> labels(total_rows);
            std::size_t row = 0;
            for (std::size_t b = 0; b < batch_n; ++b) {
                const BimodalSample& s = train[order[start + b]];
                for (std::size_t i = 0; i < fwd[b].dc.o1.size(); ++i, ++row) {
                    const CorrUnitOut out =
                        corr_unit_forward(model.unit, fwd[b].dc.o1[i], fwd[b].dc.o2[i],
                                          &fwd[b].hc1[i], &fwd[b].hc2[i]);
                    std::copy(out.logits1.begin(), out.logits1.end(), logits1.row(row));
                    std::copy(out.logits2.begin(), out.logits2.end(), logits2.row(row));
                    std::copy(out.h1.begin(), out.h1.end(), h1.row(row));
                    std::copy(out.h2.begin(), out.h2.end(), h2.row(row));
                    labels[row] = s.label;
                }
            }

            Matrix grad_h1, grad_h2;
            double corr = 0.0;
            const bool use_corr = total_rows >= 2;
            if (use_corr) {
                corr = cca_corr(h1, h2, config.cca_ridge, &grad_h1, &grad_h2);
            }
            const JointLoss loss =
                joint_loss(logits1, logits2, labels, corr, config.k_corr);
            if (!std::isfinite(loss.total)) {
                throw DivergenceError("train_corrmnn: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batches));
            }
            epoch_loss += loss.total;
            ++batches;

            // Backward: correlation unit per node, then through time.
            row = 0;
            for (std::size_t b = 0; b < batch_n; ++b) {
                const std::size_t t = fwd[b].dc.o1.size();
                std::vector<Vector> grad_o1(t), grad_o2(t);
                for (std::size_t i = 0; i < t; ++i, ++row) {
                    Vector ge1(config.k_corr, 0.0), ge2(config.k_corr, 0.0);
                    if (use_corr) {
                        for (std::size_t j = 0; j < config.k_corr; ++j) {
                            ge1[j] = loss.dtotal_dcorr * grad_h1(row, j);
                            ge2[j] = loss.dtotal_dcorr * grad_h2(row, j);
                        }
                    }
                    grad_o1[i] = head_backward(model.unit.ch1, fwd[b].hc1[i],
                                               logits_row(loss.grad_logits1, row), ge1,
                                               grads.unit.ch1);
                    grad_o2[i] = head_backward(model.unit.ch2, fwd[b].hc2[i],
                                               logits_row(loss.grad_logits2, row), ge2,
                                               grads.unit.ch2);
                }
                Vector carry1(model.cell1.hidden(), 0.0);
                Vector carry2(model.cell2.hidden(), 0.0);
                Vector grad_x, grad_prev;
                for (std::size_t i = t; i-- > 0;) {
                    for (std::size_t j = 0; j < carry1.size(); ++j) carry1[j] += grad_o1[i][j];
                    cell_backward(model.cell1, fwd[b].dc.cache1[i], carry1, grads.cell1,
                                  grad_x, grad_prev);
                    carry1 = grad_prev;
                    for (std::size_t j = 0; j < carry2.size(); ++j) carry2[j] += grad_o2[i][j];
                    cell_backward(model.cell2, fwd[b].dc.cache2[i], carry2, grads.cell2,
                                  grad_x, grad_prev);
                    carry2 = grad_prev;
                }
            }

            adam_step(param_views, grad_views, adam, config.learning_rate);
        }
        rep.loss_curve.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
    }

    // Final training accuracies per channel (argmax of node-averaged logits).
    std::size_t correct1 = 0, correct2 = 0;
    for (const auto& s : train) {
        const auto [l1, l2] = mean_channel_logits(model, s);
        const auto argmax = [](const Vector& v) {
            return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
        };
        if (argmax(l1) == s.label) ++correct1;
        if (argmax(l2) == s.label) ++correct2;
    }
    rep.final_accuracy_ch1 = static_cast<double>(correct1) / static_cast<double>(train.size());
    rep.final_accuracy_ch2 = static_cast<double>(correct2) / static_cast<double>(train.size());
    return model;
}

Matrix extract_temporal_features(const CorrmnnModel& model, const BimodalSample& sample) {
    const DcmnnOut out = dcmnn_forward(model.cell1, model.cell2, sample, false);
    const std::size_t nodes = out.o1.size();
    Matrix features(nodes, 2 * model.k_corr);
    for (std::size_t i = 0; i < nodes; ++i) {
        const CorrUnitOut unit_out = corr_unit_forward(model.unit, out.o1[i], out.o2[i]);
        std::copy(unit_out.h1.begin(), unit_out.h1.end(), features.row(i));
        std::copy(unit_out.h2.begin(), unit_out.h2.end(),
                  features.row(i) + model.k_corr);
    }
    return features;
}

std::pair<Vector, Vector> mean_channel_logits(const CorrmnnModel& model,
                                              const BimodalSample& sample) {
    const DcmnnOut out = dcmnn_forward(model.cell1, model.cell2, sample, false);
    Vector l1(model.classes, 0.0), l2(model.classes, 0.0);
    for (std::size_t i = 0; i < out.o1.size(); ++i) {
        const CorrUnitOut unit_out = corr_unit_forward(model.unit, out.o1[i], out.o2[i]);
        for (std::size_t c = 0; c < model.classes; ++c) {
            l1[c] += unit_out.logits1[c];
            l2[c] += unit_out.logits2[c];
        }
    }
    const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(1, out.o1.size()));
    for (double& v : l1) v *= scale;
    for (double& v : l2) v *= scale;
    return {l1, l2};
}

}  // namespace gaitfuse::corrmnn
