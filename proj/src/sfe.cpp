#include "gaitfuse/sfe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gaitfuse/errors.hpp"
#include "gaitfuse/rng.hpp"

namespace gaitfuse::sfe {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kVarFloorAbs = 1e-12;
constexpr double kCollapseWeight = 1e-8;

double safe_ratio(double num, double den) { return den != 0.0 ? num / den : 0.0; }

}  // namespace

std::array<double, 8> time_domain_features(std::span<const double> signal) {
    const std::size_t n = signal.size();
    if (n < 2) throw InputError("time_domain_features: need at least 2 samples");

    double mean = 0.0, abs_mean = 0.0, sq_mean = 0.0, sqrt_abs_mean = 0.0, peak = 0.0;
    for (double x : signal) {
        mean += x;
        abs_mean += std::abs(x);
        sq_mean += x * x;
        sqrt_abs_mean += std::sqrt(std::abs(x));
        peak = std::max(peak, std::abs(x));
    }
    mean /= n;
    abs_mean /= n;
    sq_mean /= n;
    sqrt_abs_mean /= n;
    const double rms = std::sqrt(sq_mean);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : signal) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    const double skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    const double kurt = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    const double waveform = safe_ratio(rms, abs_mean);
    const double crest = safe_ratio(peak, rms);
    const double impulse = safe_ratio(peak, abs_mean);
    const double margin = safe_ratio(peak, sqrt_abs_mean * sqrt_abs_mean);

    return {mean, rms, skew, kurt, waveform, crest, impulse, margin};
}

Vector freq_domain_features(std::span<const double> signal) {
    const std::size_t d = signal.size();
    if (d < 1) throw InputError("freq_domain_features: empty signal");
    Vector spectrum(d);
    for (std::size_t b = 0; b < d; ++b) {
        double re = 0.0, im = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            const double angle = 2.0 * kPi * static_cast<double>(a) *
                                 static_cast<double>(b) / static_cast<double>(d);
            re += signal[a] * std::cos(angle);
            im -= signal[a] * std::sin(angle);
        }
        spectrum[b] = std::sqrt(re * re + im * im);
    }
    return spectrum;
}

Matrix direct_descriptors(const Matrix& window) { return window; }

Matrix time_stats_descriptors(const Matrix& window) {
    Matrix out(window.rows(), 8);
    for (std::size_t i = 0; i < window.rows(); ++i) {
        const auto stats =
            time_domain_features({window.row(i), window.cols()});
        std::copy(stats.begin(), stats.end(), out.row(i));
    }
    return out;
}

Matrix freq_spectrum_descriptors(const Matrix& window) {
    Matrix out(window.rows(), window.cols());
    for (std::size_t i = 0; i < window.rows(); ++i) {
        const Vector spec = freq_domain_features({window.row(i), window.cols()});
        std::copy(spec.begin(), spec.end(), out.row(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// GMM
// ---------------------------------------------------------------------------

namespace {

double log_gaussian_diag(const double* x, const double* mean, const double* var,
                         std::size_t dims) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dims; ++d) {
        const double diff = x[d] - mean[d];
        acc += std::log(2.0 * kPi * var[d]) + diff * diff / var[d];
    }
    return -0.5 * acc;
}

// log responsibilities for one descriptor; returns total log density.
double log_posteriors(const GmmModel& m, const double* x, Vector& scratch) {
    double max_term = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.components; ++k) {
        scratch[k] = std::log(m.weights[k]) +
                     log_gaussian_diag(x, m.means.row(k), m.variances.row(k), m.dims);
        max_term = std::max(max_term, scratch[k]);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < m.components; ++k) sum += std::exp(scratch[k] - max_term);
    const double log_density = max_term + std::log(sum);
    for (std::size_t k = 0; k < m.components; ++k) scratch[k] -= log_density;
    return log_density;
}

}  // namespace

double GmmModel::log_density(const double* x) const {
    Vector scratch(components);
    return log_posteriors(*this, x, scratch);
}

Vector gmm_posteriors(const GmmModel& model, const double* x) {
    for (std::size_t d = 0; d < model.dims; ++d) {
        if (!std::isfinite(x[d])) throw InputError("gmm_posteriors: non-finite input");
    }
    Vector log_gamma(model.components);
    log_posteriors(model, x, log_gamma);
    Vector gamma(model.components);
    for (std::size_t k = 0; k < model.components; ++k) gamma[k] = std::exp(log_gamma[k]);
    return gamma;
}

GmmModel gmm_fit(const Matrix& descriptors, std::size_t k, std::uint64_t seed,
                 const GmmFitOptions& opts, GmmFitReport* report) {
    const std::size_t t = descriptors.rows();
    const std::size_t dims = descriptors.cols();
    if (k < 1) throw InputError("gmm_fit: k must be >= 1");
    if (t < k) {
        throw InputError("gmm_fit: " + std::to_string(t) + " descriptors for k=" +
                         std::to_string(k));
    }
    if (!numkit::all_finite(descriptors)) throw InputError("gmm_fit: non-finite descriptors");

    // Global per-dimension statistics (floor reference and default variance).
    Vector global_mean(dims, 0.0), global_var(dims, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        const double* row = descriptors.row(i);
        for (std::size_t d = 0; d < dims; ++d) global_mean[d] += row[d];
    }
    for (double& m : global_mean) m /= static_cast<double>(t);
    for (std::size_t i = 0; i < t; ++i) {
        const double* row = descriptors.row(i);
        for (std::size_t d = 0; d < dims; ++d) {
            const double diff = row[d] - global_mean[d];
            global_var[d] += diff * diff;
        }
    }
    for (double& v : global_var) v /= static_cast<double>(t);

    Vector floor(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        floor[d] = std::max(opts.var_floor_rel * global_var[d], kVarFloorAbs);
    }
    const auto apply_floor = [&floor, dims](double* var) {
        for (std::size_t d = 0; d < dims; ++d) var[d] = std::max(var[d], floor[d]);
    };

    // k-means++ seeding.
    Rng rng(seed);
    GmmModel model;
    model.components = k;
    model.dims = dims;
    model.weights.assign(k, 1.0 / static_cast<double>(k));
    model.means = Matrix(k, dims);
    model.variances = Matrix(k, dims);

    std::vector<std::size_t> centers;
    centers.push_back(static_cast<std::size_t>(rng.below(t)));
    Vector dist2(t, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        const double* c = descriptors.row(centers.back());
        double total = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            double d2 = 0.0;
            const double* row = descriptors.row(i);
            for (std::size_t d = 0; d < dims; ++d) {
                const double diff = row[d] - c[d];
                d2 += diff * diff;
            }
            dist2[i] = std::min(dist2[i], d2);
            total += dist2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = rng.uniform01() * total;
            for (; pick + 1 < t; ++pick) {
                target -= dist2[pick];
                if (target <= 0.0) break;
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(t));
        }
        centers.push_back(pick);
    }
    for (std::size_t c = 0; c < k; ++c) {
        const double* row = descriptors.row(centers[c]);
        std::copy(row, row + dims, model.means.row(c));
        std::copy(global_var.begin(), global_var.end(), model.variances.row(c));
        apply_floor(model.variances.row(c));
    }

    const std::size_t farthest = [&] {
        std::size_t best = 0;
        double best_d2 = -1.0;
        for (std::size_t i = 0; i < t; ++i) {
            double d2 = 0.0;
            const double* row = descriptors.row(i);
            for (std::size_t d = 0; d < dims; ++d) {
                const double diff = row[d] - global_mean[d];
                d2 += diff * diff;
            }
            if (d2 > best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        return best;
    }();

    GmmFitReport local_report;
    GmmFitReport& rep = report ? *report : local_report;
    rep.loglik_trace.clear();
    rep.reseeded_components = 0;

    Matrix gamma(t, k);
    Vector scratch(k);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
        // E-step.
        double ll = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            ll += log_posteriors(model, descriptors.row(i), scratch);
            for (std::size_t c = 0; c < k; ++c) gamma(i, c) = std::exp(scratch[c]);
        }
        rep.loglik_trace.push_back(ll);
        rep.iterations = iter + 1;

        const double improvement = ll - prev_ll;
        if (iter > 0 && improvement < opts.rel_tol * std::max(1.0, std::abs(prev_ll))) break;
        prev_ll = ll;

        // M-step.
        for (std::size_t c = 0; c < k; ++c) {
            double nc = 0.0;
            for (std::size_t i = 0; i < t; ++i) nc += gamma(i, c);
            model.weights[c] = nc / static_cast<double>(t);
            if (model.weights[c] < kCollapseWeight) {
                const double* row = descriptors.row(farthest);
                std::copy(row, row + dims, model.means.row(c));
                std::copy(global_var.begin(), global_var.end(), model.variances.row(c));
                apply_floor(model.variances.row(c));
                model.weights[c] = 1.0 / static_cast<double>(t);
                ++rep.reseeded_components;
                continue;
            }
            double* mean = model.means.row(c);
            double* var = model.variances.row(c);
            std::fill(mean, mean + dims, 0.0);
            std::fill(var, var + dims, 0.0);
            for (std::size_t i = 0; i < t; ++i) {
                const double g = gamma(i, c);
                const double* row = descriptors.row(i);
                for (std::size_t d = 0; d < dims; ++d) mean[d] += g * row[d];
            }
            for (std::size_t d = 0; d < dims; ++d) mean[d] /= nc;
            for (std::size_t i = 0; i < t; ++i) {
                const double g = gamma(i, c);
                const double* row = descriptors.row(i);
                for (std::size_t d = 0; d < dims; ++d) {
                    const double diff = row[d] - mean[d];
                    var[d] += g * diff * diff;
                }
            }
            for (std::size_t d = 0; d < dims; ++d) var[d] /= nc;
            apply_floor(var);
        }
        // Restore the sum-to-one invariant after any reseed.
        double wsum = 0.0;
        for (double w : model.weights) wsum += w;
        for (double& w : model.weights) w /= wsum;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Fisher vectors
// ---------------------------------------------------------------------------

Vector FisherVector::concat() const {
    Vector out;
    out.reserve(size());
    out.insert(out.end(), weight_block.begin(), weight_block.end());
    out.insert(out.end(), mean_block.begin(), mean_block.end());
    out.insert(out.end(), variance_block.begin(), variance_block.end());
    return out;
}

FisherVector fisher_encode(const GmmModel& model, const Matrix& descriptors,
                           double strong_ratio) {
    if (descriptors.cols() != model.dims) {
        throw DimensionError("fisher_encode: descriptor dimension " +
                             std::to_string(descriptors.cols()) + " != model dimension " +
                             std::to_string(model.dims));
    }
    if (strong_ratio < 0.0 || strong_ratio > 1.0) {
        throw InputError("fisher_encode: strong_ratio must lie in [0, 1]");
    }
    const std::size_t t = descriptors.rows();
    const std::size_t k = model.components;
    const std::size_t dims = model.dims;

    FisherVector fv;
    fv.strong_ratio = strong_ratio;
    fv.weight_block.assign(k > 0 ? k - 1 : 0, 0.0);
    fv.mean_block.assign(k * dims, 0.0);
    fv.variance_block.assign(k * dims, 0.0);

    for (std::size_t i = 0; i < t; ++i) {
        const double* x = descriptors.row(i);
        const Vector gamma = gmm_posteriors(model, x);
        for (std::size_t c = 0; c < k; ++c) {
            const double g = gamma[c];
            const double* mean = model.means.row(c);
            const double* var = model.variances.row(c);
            for (std::size_t d = 0; d < dims; ++d) {
                const double u = (x[d] - mean[d]) / std::sqrt(var[d]);
                fv.mean_block[c * dims + d] += g * u;
                fv.variance_block[c * dims + d] += g * (u * u - 1.0);
            }
            if (c >= 1) {
                fv.weight_block[c - 1] += g / std::sqrt(model.weights[c]) -
                                          gamma[0] * std::sqrt(model.weights[c]) /
                                              model.weights[0];
            }
        }
    }

    const double tn = static_cast<double>(t);
    for (std::size_t c = 0; c < k; ++c) {
        const double mean_scale = strong_ratio / (tn * std::sqrt(model.weights[c]));
        const double var_scale = strong_ratio / (tn * std::sqrt(2.0 * model.weights[c]));
        for (std::size_t d = 0; d < dims; ++d) {
            fv.mean_block[c * dims + d] *= mean_scale;
            fv.variance_block[c * dims + d] *= var_scale;
        }
    }
    for (double& w : fv.weight_block) w *= strong_ratio / tn;
    return fv;
}

FisherVector group_normalize(const FisherVector& fv) {
    FisherVector out = fv;
    const auto weight_by_block = [](Vector& block) {
        double l1 = 0.0;
        for (double g : block) l1 += std::abs(g);
        if (l1 <= 0.0) {
            std::fill(block.begin(), block.end(), 0.0);
            return;
        }
        for (double& g : block) g = g * std::abs(g) / l1;
    };
    weight_by_block(out.weight_block);
    weight_by_block(out.mean_block);
    weight_by_block(out.variance_block);

    double sq = 0.0;
    for (double g : out.weight_block) sq += g * g;
    for (double g : out.mean_block) sq += g * g;
    for (double g : out.variance_block) sq += g * g;
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (double& g : out.weight_block) g *= inv;
        for (double& g : out.mean_block) g *= inv;
        for (double& g : out.variance_block) g *= inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

LdaModel lda_fit(const Matrix& features, const std::vector<int>& labels,
                 std::size_t d_out) {
    const std::size_t n = features.rows();
    const std::size_t dims = features.cols();
    if (labels.size() != n) throw DimensionError("lda_fit: labels/features length mismatch");
    if (n == 0) throw InputError("lda_fit: no samples");

    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw InputError("lda_fit: negative label");
        max_label = std::max(max_label, l);
    }
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
    if (d_out > classes - 1) {
        throw DimensionError("lda_fit: d_out " + std::to_string(d_out) +
                             " exceeds classes - 1 = " + std::to_string(classes - 1));
    }
    if (d_out == 0) throw InputError("lda_fit: d_out must be >= 1");

    std::vector<std::size_t> counts(classes, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] < 2) {
            throw InputError("lda_fit: class " + std::to_string(c) +
                             " has fewer than 2 samples");
        }
    }

    Matrix class_mean(classes, dims, 0.0);
    Vector global_mean(dims, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = features.row(i);
        double* cm = class_mean.row(static_cast<std::size_t>(labels[i]));
        for (std::size_t d = 0; d < dims; ++d) {
            cm[d] += row[d];
            global_mean[d] += row[d];
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        double* cm = class_mean.row(c);
        for (std::size_t d = 0; d < dims; ++d) cm[d] /= static_cast<double>(counts[c]);
    }
    for (double& g : global_mean) g /= static_cast<double>(n);

    Matrix s_within(dims, dims, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = features.row(i);
        const double* cm = class_mean.row(static_cast<std::size_t>(labels[i]));
        for (std::size_t a = 0; a < dims; ++a) {
            const double da = row[a] - cm[a];
            for (std::size_t b = a; b < dims; ++b) {
                s_within(a, b) += da * (row[b] - cm[b]);
            }
        }
    }
    Matrix s_between(dims, dims, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const double* cm = class_mean.row(c);
        const double nc = static_cast<double>(counts[c]);
        for (std::size_t a = 0; a < dims; ++a) {
            const double da = cm[a] - global_mean[a];
            for (std::size_t b = a; b < dims; ++b) {
                s_between(a, b) += nc * da * (cm[b] - global_mean[b]);
            }
        }
    }
    for (std::size_t a = 0; a < dims; ++a) {
        for (std::size_t b = 0; b < a; ++b) {
            s_within(a, b) = s_within(b, a);
            s_between(a, b) = s_between(b, a);
        }
    }

    double trace = 0.0;
    for (std::size_t d = 0; d < dims; ++d) trace += s_within(d, d);
    const double ridge = 1e-6 * trace / static_cast<double>(dims);
    const Matrix whiten = numkit::inv_sqrt_psd(s_within, std::max(ridge, kVarFloorAbs));

    // Whitened between-class scatter; symmetrize to absorb round-off.
    Matrix m = numkit::matmul(numkit::matmul(whiten, s_between), whiten);
    for (std::size_t a = 0; a < dims; ++a) {
        for (std::size_t b = a + 1; b < dims; ++b) {
            const double avg = 0.5 * (m(a, b) + m(b, a));
            m(a, b) = avg;
            m(b, a) = avg;
        }
    }
    const auto eig = numkit::sym_eig(m);

    LdaModel model;
    model.projection = Matrix(dims, d_out);
    for (std::size_t j = 0; j < d_out; ++j) {
        for (std::size_t a = 0; a < dims; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < dims; ++b) acc += whiten(a, b) * eig.vectors(b, j);
            model.projection(a, j) = acc;
        }
    }
    model.class_means = Matrix(classes, d_out);
    for (std::size_t c = 0; c < classes; ++c) {
        const Vector projected = lda_project(model, class_mean.row_vec(c));
        std::copy(projected.begin(), projected.end(), model.class_means.row(c));
    }
    return model;
}

Vector lda_project(const LdaModel& model, const Vector& feature) {
    if (feature.size() != model.projection.rows()) {
        throw DimensionError("lda_project: feature dimension mismatch");
    }
    return numkit::matvec_transposed(model.projection, feature);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

Matrix pool_descriptors(const std::vector<BimodalSample>& samples,
                        Matrix (*builder)(const Matrix&), bool channel1) {
    std::vector<Matrix> parts;
    std::size_t total = 0, width = 0;
    for (const auto& s : samples) {
        Matrix d = builder(channel1 ? s.x1 : s.x2);
        total += d.rows();
        width = d.cols();
        parts.push_back(std::move(d));
    }
    Matrix pooled(total, width);
    std::size_t r = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.rows(); ++i, ++r) {
            std::copy(p.row(i), p.row(i) + width, pooled.row(r));
        }
    }
    return pooled;
}

}  // namespace

Vector sfe_encode(const SfeModels& models, const BimodalSample& sample) {
    const FisherVector fv1 = group_normalize(
        fisher_encode(models.gmm_direct, direct_descriptors(sample.x1), models.strong_ratio));
    const FisherVector fv2 = group_normalize(
        fisher_encode(models.gmm_time, time_stats_descriptors(sample.x2), models.strong_ratio));
    const FisherVector fvs = group_normalize(
        fisher_encode(models.gmm_freq, freq_spectrum_descriptors(sample.x2), models.strong_ratio));

    Vector out;
    out.reserve(fv1.size() + fv2.size() + fvs.size());
    const auto append = [&out](const FisherVector& fv) {
        const Vector v = fv.concat();
        out.insert(out.end(), v.begin(), v.end());
    };
    append(fv1);
    append(fv2);
    append(fvs);
    return out;
}

SfeModels fit_sfe(const std::vector<BimodalSample>& train, const SfeFitConfig& config) {
    if (train.empty()) throw InputError("fit_sfe: empty training set");

    SfeModels models;
    models.strong_ratio = config.strong_ratio;
    models.gmm_direct = gmm_fit(pool_descriptors(train, direct_descriptors, true),
                                config.k_direct, config.seed, config.gmm);
    models.gmm_time = gmm_fit(pool_descriptors(train, time_stats_descriptors, false),
                              config.k_time, config.seed + 1, config.gmm);
    models.gmm_freq = gmm_fit(pool_descriptors(train, freq_spectrum_descriptors, false),
                              config.k_freq, config.seed + 2, config.gmm);

    std::vector<int> labels(train.size());
    Matrix features;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const Vector enc = sfe_encode(models, train[i]);
        if (i == 0) features = Matrix(train.size(), enc.size());
        std::copy(enc.begin(), enc.end(), features.row(i));
        labels[i] = train[i].label;
    }

    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    const std::size_t d_out =
        config.d_out > 0 ? config.d_out : static_cast<std::size_t>(max_label);
    models.lda = lda_fit(features, labels, d_out);
    return models;
}

Vector sfe_pipeline(const SfeModels& models, const BimodalSample& sample) {
    return lda_project(models.lda, sfe_encode(models, sample));
}

}  // namespace gaitfuse::sfe
