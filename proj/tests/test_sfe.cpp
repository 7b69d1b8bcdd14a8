#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gaitfuse/errors.hpp"
#include "gaitfuse/rng.hpp"
#include "gaitfuse/sfe.hpp"

using namespace gaitfuse;
using namespace gaitfuse::sfe;

TEST_CASE("time_domain_features: constant signal degeneracies") {
    const std::vector<double> x{1, 1, 1, 1};
    const auto f = time_domain_features(x);
    const double expected[8] = {1, 1, 0, 0, 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) CHECK(f[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("time_domain_features: alternating signal symmetry") {
    const std::vector<double> x{1, -1, 1, -1};
    const auto f = time_domain_features(x);
    CHECK(f[0] == doctest::Approx(0.0));          // mean
    CHECK(f[1] == doctest::Approx(1.0));          // rms
    CHECK(f[4] == doctest::Approx(1.0));          // waveform
    CHECK(f[5] == doctest::Approx(1.0));          // crest
}

TEST_CASE("time_domain_features: hand computation of every factor") {
    // x = [0,3,0,0]: mean 3/4, rms 3/2, mean|x| 3/4, mean sqrt|x| = sqrt(3)/4,
    // peak 3; m2 = 27/16, m3 = 81/32, m4 = 1701/256.
    const std::vector<double> x{0, 3, 0, 0};
    const auto f = time_domain_features(x);
    CHECK(f[0] == doctest::Approx(0.75));
    CHECK(f[1] == doctest::Approx(1.5));
    CHECK(f[2] == doctest::Approx(2.0 / std::sqrt(3.0)));  // skewness
    CHECK(f[3] == doctest::Approx(-2.0 / 3.0));            // excess kurtosis
    CHECK(f[4] == doctest::Approx(2.0));                   // waveform
    CHECK(f[5] == doctest::Approx(2.0));                   // crest
    CHECK(f[6] == doctest::Approx(4.0));                   // impulse
    CHECK(f[7] == doctest::Approx(16.0));                  // margin

    CHECK_THROWS_AS(time_domain_features(std::vector<double>{1.0}), InputError);
}

TEST_CASE("freq_domain_features: DC-only signal") {
    const std::vector<double> x(6, -2.5);
    const auto spec = freq_domain_features(x);
    CHECK(spec[0] == doctest::Approx(6 * 2.5).epsilon(1e-12));
    for (std::size_t b = 1; b < 6; ++b) CHECK(std::abs(spec[b]) < 1e-10);
}

TEST_CASE("freq_domain_features: pure cosine peaks at its bin") {
    std::vector<double> x(8);
    for (int a = 0; a < 8; ++a) x[a] = std::cos(2.0 * 3.14159265358979323846 * a / 8.0);
    const auto spec = freq_domain_features(x);
    CHECK(spec[1] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(spec[7] == doctest::Approx(4.0).epsilon(1e-10));
    for (std::size_t b : {0, 2, 3, 4, 5, 6}) CHECK(std::abs(spec[b]) < 1e-10);
}

TEST_CASE("freq_domain_features: Parseval identity on random signals") {
    Rng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> x(32 + rep * 7);
        for (double& v : x) v = rng.normal();
        const auto spec = freq_domain_features(x);
        double lhs = 0.0, rhs = 0.0;
        for (double s : spec) lhs += s * s;
        for (double v : x) rhs += v * v;
        rhs *= static_cast<double>(x.size());
        CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, rhs));
    }
}

namespace {

// Direct mixture density evaluation, independent of the library path.
double direct_log_density(const GmmModel& m, const double* x) {
    double total = 0.0;
    for (std::size_t k = 0; k < m.components; ++k) {
        double quad = 0.0, det = 1.0;
        for (std::size_t d = 0; d < m.dims; ++d) {
            const double diff = x[d] - m.means(k, d);
            quad += diff * diff / m.variances(k, d);
            det *= m.variances(k, d);
        }
        total += m.weights[k] * std::exp(-0.5 * quad) /
                 (std::pow(2.0 * 3.14159265358979323846, m.dims / 2.0) * std::sqrt(det));
    }
    return std::log(total);
}

Matrix sample_from_gmm(const GmmModel& m, std::size_t count, Rng& rng) {
    Matrix out(count, m.dims);
    for (std::size_t i = 0; i < count; ++i) {
        double u = rng.uniform01();
        std::size_t k = 0;
        while (k + 1 < m.components && u > m.weights[k]) {
            u -= m.weights[k];
            ++k;
        }
        for (std::size_t d = 0; d < m.dims; ++d) {
            out(i, d) = m.means(k, d) + std::sqrt(m.variances(k, d)) * rng.normal();
        }
    }
    return out;
}

double norm2(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("gmm_fit: K=1 closed form") {
    Rng rng(5);
    Matrix data(40, 2);
    for (std::size_t i = 0; i < 40; ++i) {
        data(i, 0) = 3.0 + rng.normal();
        data(i, 1) = -1.0 + 2.0 * rng.normal();
    }
    const GmmModel m = gmm_fit(data, 1, 0);
    REQUIRE(m.components == 1);
    CHECK(m.weights[0] == doctest::Approx(1.0));

    double mean[2] = {0, 0};
    for (std::size_t i = 0; i < 40; ++i)
        for (int d = 0; d < 2; ++d) mean[d] += data(i, d) / 40.0;
    double var[2] = {0, 0};
    for (std::size_t i = 0; i < 40; ++i)
        for (int d = 0; d < 2; ++d) var[d] += (data(i, d) - mean[d]) * (data(i, d) - mean[d]) / 40.0;
    for (int d = 0; d < 2; ++d) {
        CHECK(m.means(0, d) == doctest::Approx(mean[d]).epsilon(1e-9));
        CHECK(m.variances(0, d) == doctest::Approx(var[d]).epsilon(1e-6));
    }
}

TEST_CASE("gmm_fit: recovers two well-separated clusters") {
    Rng rng(9);
    Matrix data(400, 1);
    for (std::size_t i = 0; i < 400; ++i) {
        data(i, 0) = (i % 2 == 0 ? 5.0 : -5.0) + 0.3 * rng.normal();
    }
    const GmmModel m = gmm_fit(data, 2, 3);
    std::vector<double> centers{m.means(0, 0), m.means(1, 0)};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0] == doctest::Approx(-5.0).epsilon(0.02));
    CHECK(centers[1] == doctest::Approx(5.0).epsilon(0.02));
    CHECK(std::abs(centers[0] + 5.0) < 0.1);
    CHECK(std::abs(centers[1] - 5.0) < 0.1);
}

TEST_CASE("gmm_fit: log-likelihood trace non-decreasing, final value matches oracle") {
    Rng rng(13);
    Matrix data(200, 3);
    for (std::size_t i = 0; i < 200; ++i)
        for (int d = 0; d < 3; ++d)
            data(i, d) = (i % 3) * 2.0 + rng.normal();

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GmmFitReport report;
        const GmmModel m = gmm_fit(data, 3, seed, {}, &report);
        REQUIRE(report.loglik_trace.size() >= 2);
        for (std::size_t i = 1; i < report.loglik_trace.size(); ++i) {
            CHECK(report.loglik_trace[i] >= report.loglik_trace[i - 1] - 1e-9);
        }
        // Directly recomputed likelihood of the returned model can only be
        // at or above the last recorded E-step value.
        double oracle = 0.0;
        for (std::size_t i = 0; i < 200; ++i) oracle += direct_log_density(m, data.row(i));
        CHECK(oracle >= report.loglik_trace.back() - 1e-6);
    }

    CHECK_THROWS_AS(gmm_fit(Matrix(2, 1, 0.0), 3, 0), InputError);
}

TEST_CASE("gmm_posteriors: single component and symmetric pair") {
    GmmModel one;
    one.components = 1;
    one.dims = 1;
    one.weights = {1.0};
    one.means = Matrix(1, 1, 0.7);
    one.variances = Matrix(1, 1, 2.0);
    const double x = 0.3;
    CHECK(gmm_posteriors(one, &x)[0] == doctest::Approx(1.0));

    GmmModel sym;
    sym.components = 2;
    sym.dims = 1;
    sym.weights = {0.5, 0.5};
    sym.means = Matrix(2, 1);
    sym.means(0, 0) = -2.0;
    sym.means(1, 0) = 2.0;
    sym.variances = Matrix(2, 1, 1.0);
    const double zero = 0.0;
    const auto gamma = gmm_posteriors(sym, &zero);
    CHECK(gamma[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gamma[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gmm_posteriors: agrees with direct density evaluation") {
    GmmModel m;
    m.components = 2;
    m.dims = 1;
    m.weights = {0.3, 0.7};
    m.means = Matrix(2, 1);
    m.means(0, 0) = 0.0;
    m.means(1, 0) = 1.0;
    m.variances = Matrix(2, 1, 1.0);

    const double x = 0.0;
    const auto gamma = gmm_posteriors(m, &x);

    const auto normal_pdf = [](double v, double mu) {
        return std::exp(-0.5 * (v - mu) * (v - mu)) / std::sqrt(2.0 * 3.14159265358979323846);
    };
    const double p0 = 0.3 * normal_pdf(x, 0.0);
    const double p1 = 0.7 * normal_pdf(x, 1.0);
    CHECK(gamma[0] == doctest::Approx(p0 / (p0 + p1)).epsilon(1e-12));
    CHECK(gamma[1] == doctest::Approx(p1 / (p0 + p1)).epsilon(1e-12));
    CHECK(gamma[0] + gamma[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fisher_encode: K=1 descriptor at the mean") {
    GmmModel m;
    m.components = 1;
    m.dims = 3;
    m.weights = {1.0};
    m.means = Matrix(1, 3);
    m.means(0, 0) = 1.0;
    m.means(0, 1) = -2.0;
    m.means(0, 2) = 0.5;
    m.variances = Matrix(1, 3, 1.7);

    Matrix x(1, 3);
    for (int d = 0; d < 3; ++d) x(0, d) = m.means(0, d);

    const double w = 0.8;
    const FisherVector fv = fisher_encode(m, x, w);
    CHECK(fv.weight_block.empty());
    for (double g : fv.mean_block) CHECK(g == doctest::Approx(0.0));
    // Variance gradient at the mean is -w / sqrt(2) per dimension.
    for (double g : fv.variance_block) CHECK(g == doctest::Approx(-w / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("fisher_encode: linear in the strong-signal ratio") {
    Rng rng(17);
    GmmModel m = gmm_fit(sample_from_gmm(
        [] {
            GmmModel g;
            g.components = 2;
            g.dims = 2;
            g.weights = {0.4, 0.6};
            g.means = Matrix(2, 2);
            g.means(0, 0) = -1;
            g.means(1, 1) = 2;
            g.variances = Matrix(2, 2, 1.0);
            return g;
        }(),
        300, rng), 2, 1);

    Matrix x(5, 2);
    for (std::size_t i = 0; i < 5; ++i)
        for (int d = 0; d < 2; ++d) x(i, d) = rng.normal();

    const FisherVector a = fisher_encode(m, x, 0.4);
    const FisherVector b = fisher_encode(m, x, 0.8);
    const Vector va = a.concat(), vb = b.concat();
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(vb[i] == doctest::Approx(2.0 * va[i]));

    CHECK_THROWS_AS(fisher_encode(m, Matrix(2, 5, 0.0), 1.0), DimensionError);
    CHECK_THROWS_AS(fisher_encode(m, x, 1.5), InputError);
}

TEST_CASE("group_normalize: hand evaluation on single-element blocks") {
    FisherVector fv;
    fv.weight_block = {3.0};
    fv.mean_block = {4.0};
    fv.variance_block = {0.0};
    const FisherVector out = group_normalize(fv);
    CHECK(out.weight_block[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(out.mean_block[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(out.variance_block[0] == doctest::Approx(0.0));
}

TEST_CASE("group_normalize: scale invariance and unit norm") {
    Rng rng(23);
    FisherVector fv;
    fv.weight_block.resize(3);
    fv.mean_block.resize(8);
    fv.variance_block.resize(8);
    for (double& g : fv.weight_block) g = rng.normal();
    for (double& g : fv.mean_block) g = rng.normal();
    for (double& g : fv.variance_block) g = rng.normal();

    const FisherVector base = group_normalize(fv);
    FisherVector scaled = fv;
    const double c = 3.7;
    for (double& g : scaled.weight_block) g *= c;
    for (double& g : scaled.mean_block) g *= c;
    for (double& g : scaled.variance_block) g *= c;
    const FisherVector out = group_normalize(scaled);

    const Vector vb = base.concat(), vo = out.concat();
    for (std::size_t i = 0; i < vb.size(); ++i) CHECK(std::abs(vo[i] - vb[i]) < 1e-12);
    CHECK(norm2(vb) == doctest::Approx(1.0).epsilon(1e-12));

    // All-zero input stays zero.
    FisherVector zero;
    zero.weight_block.assign(2, 0.0);
    zero.mean_block.assign(4, 0.0);
    zero.variance_block.assign(4, 0.0);
    const FisherVector zout = group_normalize(zero);
    for (double g : zout.concat()) CHECK(g == 0.0);
}

TEST_CASE("fisher consistency: block norms shrink as T grows") {
    GmmModel truth;
    truth.components = 2;
    truth.dims = 2;
    truth.weights = {0.5, 0.5};
    truth.means = Matrix(2, 2);
    truth.means(0, 0) = -1.5;
    truth.means(1, 0) = 1.5;
    truth.variances = Matrix(2, 2, 1.0);

    std::vector<double> small_norms, large_norms;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 100);
        const FisherVector small = fisher_encode(truth, sample_from_gmm(truth, 100, rng), 1.0);
        const FisherVector large = fisher_encode(truth, sample_from_gmm(truth, 10000, rng), 1.0);
        small_norms.push_back(norm2(small.concat()));
        large_norms.push_back(norm2(large.concat()));
    }
    std::sort(small_norms.begin(), small_norms.end());
    std::sort(large_norms.begin(), large_norms.end());
    CHECK(large_norms[10] < small_norms[10]);  // medians
}

TEST_CASE("lda_fit: recovers the separating axis within 5 degrees") {
    Rng rng(29);
    const std::size_t n = 2000;
    Matrix feats(n, 5);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 2);
        const double offset = labels[i] == 0 ? -1.0 : 1.0;
        feats(i, 0) = offset + 0.3 * rng.normal();
        for (int d = 1; d < 5; ++d) feats(i, d) = 0.3 * rng.normal();
    }
    const LdaModel m = lda_fit(feats, labels, 1);
    Vector axis(5);
    for (int d = 0; d < 5; ++d) axis[d] = m.projection(d, 0);
    const double norm = std::sqrt(numkit::dot(axis, axis));
    const double cosine = std::abs(axis[0]) / norm;
    CHECK(std::acos(std::min(1.0, cosine)) < 5.0 * 3.14159265358979323846 / 180.0);
}

TEST_CASE("lda_fit: projected axis beats random projections on scatter ratio") {
    Rng rng(31);
    const std::size_t n = 300;
    Matrix feats(n, 4);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 3);
        for (int d = 0; d < 4; ++d)
            feats(i, d) = 0.8 * labels[i] * (d == 1 ? 1.0 : -0.3) + 0.5 * rng.normal();
    }
    const LdaModel m = lda_fit(feats, labels, 1);

    const auto scatter_ratio = [&](const Vector& axis) {
        double class_sum[3][4] = {};
        std::size_t counts[3] = {};
        for (std::size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 4; ++d) class_sum[labels[i]][d] += feats(i, d);
            ++counts[labels[i]];
        }
        Vector proj(n);
        for (std::size_t i = 0; i < n; ++i) {
            proj[i] = 0.0;
            for (int d = 0; d < 4; ++d) proj[i] += feats(i, d) * axis[d];
        }
        double cm[3], gm = 0.0;
        for (int c = 0; c < 3; ++c) {
            cm[c] = 0.0;
            for (int d = 0; d < 4; ++d) cm[c] += class_sum[c][d] / counts[c] * axis[d];
        }
        for (std::size_t i = 0; i < n; ++i) gm += proj[i] / n;
        double sb = 0.0, sw = 0.0;
        for (int c = 0; c < 3; ++c) sb += counts[c] * (cm[c] - gm) * (cm[c] - gm);
        for (std::size_t i = 0; i < n; ++i) sw += (proj[i] - cm[labels[i]]) * (proj[i] - cm[labels[i]]);
        return sb / sw;
    };

    Vector lda_axis(4);
    for (int d = 0; d < 4; ++d) lda_axis[d] = m.projection(d, 0);
    const double lda_ratio = scatter_ratio(lda_axis);
    for (int rep = 0; rep < 20; ++rep) {
        Vector axis(4);
        for (double& a : axis) a = rng.normal();
        CHECK(lda_ratio > scatter_ratio(axis));
    }
}

TEST_CASE("lda_fit: dimension errors") {
    Matrix feats(8, 3);
    std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
    Rng rng(37);
    for (std::size_t i = 0; i < 8; ++i)
        for (int d = 0; d < 3; ++d) feats(i, d) = rng.normal() + labels[i];

    CHECK_NOTHROW(lda_fit(feats, labels, 3));  // C=4 admits d_out = 3
    CHECK_THROWS_AS(lda_fit(feats, labels, 4), DimensionError);

    std::vector<int> starved{0, 0, 1, 1, 2, 2, 3, 4};  // classes 3, 4 have 1 sample
    CHECK_THROWS_AS(lda_fit(feats, starved, 1), InputError);
}

TEST_CASE("sfe pipeline: concatenated length arithmetic and determinism") {
    ingest::SynthSpec spec;
    spec.classes = 3;
    spec.samples_per_class = 12;
    spec.timesteps1 = 8;
    spec.timesteps2 = 8;
    spec.dim_p = 4;
    spec.dim_q = 5;
    spec.separation = 3.0;
    spec.seed = 11;
    const auto data = ingest::synth_bimodal(spec);

    SfeFitConfig config;
    config.k_direct = 3;
    config.k_time = 2;
    config.k_freq = 2;
    config.seed = 7;
    const SfeModels models = fit_sfe(data, config);

    const Vector enc = sfe_encode(models, data[0]);
    const std::size_t expected = (3 * (2 * 4 + 1) - 1) +   // direct: K=3, D=4
                                 (2 * (2 * 8 + 1) - 1) +   // time stats: K=2, D=8
                                 (2 * (2 * 5 + 1) - 1);    // spectrum: K=2, D=5
    CHECK(enc.size() == expected);

    const Vector fsp_a = sfe_pipeline(models, data[0]);
    const Vector fsp_b = sfe_pipeline(models, data[0]);
    REQUIRE(fsp_a.size() == 2);  // default d_out = classes - 1
    for (std::size_t i = 0; i < fsp_a.size(); ++i) CHECK(fsp_a[i] == fsp_b[i]);
}

TEST_CASE("sfe pipeline: projection keeps nearest-class-mean accuracy") {
    ingest::SynthSpec spec;
    spec.classes = 3;
    spec.samples_per_class = 20;
    spec.timesteps1 = 8;
    spec.timesteps2 = 8;
    spec.dim_p = 4;
    spec.dim_q = 4;
    spec.separation = 4.0;
    spec.seed = 3;
    const auto data = ingest::synth_bimodal(spec);

    SfeFitConfig config;
    config.k_direct = 3;
    config.k_time = 2;
    config.k_freq = 2;
    config.seed = 5;
    const SfeModels models = fit_sfe(data, config);

    const auto nearest_mean_accuracy = [&](bool projected) {
        std::vector<Vector> feats;
        for (const auto& s : data) {
            feats.push_back(projected ? sfe_pipeline(models, s) : sfe_encode(models, s));
        }
        const std::size_t dim = feats[0].size();
        std::vector<Vector> means(3, Vector(dim, 0.0));
        std::vector<std::size_t> counts(3, 0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            for (std::size_t d = 0; d < dim; ++d) means[data[i].label][d] += feats[i][d];
            ++counts[data[i].label];
        }
        for (int c = 0; c < 3; ++c)
            for (double& v : means[c]) v /= static_cast<double>(counts[c]);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < 3; ++c) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = feats[i][d] - means[c][d];
                    d2 += diff * diff;
                }
                if (d2 < best_d) {
                    best_d = d2;
                    best = c;
                }
            }
            if (best == data[i].label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(data.size());
    };

    CHECK(nearest_mean_accuracy(true) >= nearest_mean_accuracy(false));
}
