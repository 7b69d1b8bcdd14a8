#include "gaitfuse/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gaitfuse/errors.hpp"
#include "gaitfuse/rng.hpp"

namespace gaitfuse::ingest {

namespace {

constexpr std::size_t kGaitnddColumns = 13;  // elapsed time + 12 features

bool parse_double(std::string_view field, double& out) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_delim(std::string_view line, char delim) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            fields.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return fields;
}

double median_abs(std::vector<double> values) {
    for (double& v : values) v = std::abs(v);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n == 0 ? 0.0 : (n % 2 == 1 ? values[n / 2]
                                      : 0.5 * (values[n / 2 - 1] + values[n / 2]));
}

}  // namespace

LoadedChannel load_gaitndd_record(const std::string& path, int label,
                                  const GaitnddLoadOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open record: " + path);

    std::vector<std::array<double, kGaitnddColumns>> rows;
    std::size_t skipped = 0;
    std::string line;
    bool saw_content = false;
    while (std::getline(in, line)) {
        const auto fields = split_whitespace(line);
        if (fields.empty()) continue;
        saw_content = true;
        if (fields.size() < kGaitnddColumns) {
            ++skipped;
            continue;
        }
        std::array<double, kGaitnddColumns> row{};
        bool ok = true;
        for (std::size_t c = 0; c < kGaitnddColumns && ok; ++c) {
            ok = parse_double(fields[c], row[c]);
        }
        if (!ok) {
            ++skipped;
            continue;
        }
        rows.push_back(row);
    }
    if (!saw_content) throw DataError("empty record: " + path);
    if (rows.empty()) {
        throw DataError("no line of " + path + " has " +
                        std::to_string(kGaitnddColumns) + " numeric columns");
    }

    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i][0] < rows[i - 1][0]) {
            throw DataError("elapsed time decreases at frame " + std::to_string(i) +
                            " of " + path);
        }
    }

    // Outlier cleaning: drop frames with any value far outside the column's
    // typical magnitude.
    std::size_t dropped = 0;
    std::vector<bool> keep(rows.size(), true);
    if (opts.outlier_factor > 0.0) {
        for (std::size_t c = 1; c < kGaitnddColumns; ++c) {
            std::vector<double> col(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][c];
            const double med = median_abs(col);
            if (med <= 0.0) continue;
            const double limit = opts.outlier_factor * med;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (std::abs(rows[i][c]) > limit) keep[i] = false;
            }
        }
        for (bool k : keep) {
            if (!k) ++dropped;
        }
    }

    LoadedChannel out;
    out.skipped_lines = skipped;
    out.dropped_frames = dropped;
    out.record.label = label;
    out.record.subject_id = std::filesystem::path(path).stem().string();
    out.record.channel1 = Matrix(rows.size() - dropped, kGaitnddColumns - 1);
    std::size_t r = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t c = 1; c < kGaitnddColumns; ++c) {
            out.record.channel1(r, c - 1) = rows[i][c];
        }
        ++r;
    }
    return out;
}

Matrix load_csv_channel(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv: " + path);

    std::string line;
    std::vector<std::string> header;
    bool header_pending = opts.has_header;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_delim(line, opts.delimiter);
        if (header_pending) {
            for (auto f : fields) header.emplace_back(f);
            header_pending = false;
            continue;
        }
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (!parse_double(fields[c], row[c])) {
                throw DataError("non-numeric field '" + std::string(fields[c]) +
                                "' at data row " + std::to_string(rows.size()) +
                                " of " + path);
            }
        }
        if (rows.empty()) {
            width = row.size();
        } else if (row.size() != width) {
            throw DataError("ragged row " + std::to_string(rows.size()) + " of " + path +
                            ": expected " + std::to_string(width) + " fields, got " +
                            std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("csv has no data rows: " + path);

    std::vector<std::size_t> cols;
    if (!opts.names.empty()) {
        if (!opts.has_header) {
            throw DataError("column names given but csv has no header: " + path);
        }
        for (const auto& name : opts.names) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) {
                throw DataError("unknown column '" + name + "' in " + path);
            }
            cols.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    } else if (!opts.indices.empty()) {
        cols = opts.indices;
    } else {
        cols.resize(width);
        for (std::size_t c = 0; c < width; ++c) cols[c] = c;
    }
    for (std::size_t c : cols) {
        if (c >= width) {
            throw DataError("unknown column index " + std::to_string(c) + " in " + path +
                            " (" + std::to_string(width) + " columns)");
        }
    }

    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = rows[i][cols[j]];
    }
    return out;
}

std::vector<Matrix> window(const Matrix& channel, std::size_t timestep, std::size_t stride) {
    if (timestep < 1 || stride < 1) throw InputError("window: timestep and stride must be >= 1");
    std::vector<Matrix> out;
    if (channel.rows() < timestep) return out;
    const std::size_t count = (channel.rows() - timestep) / stride + 1;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        Matrix win(timestep, channel.cols());
        for (std::size_t i = 0; i < timestep; ++i) {
            const double* src = channel.row(w * stride + i);
            std::copy(src, src + channel.cols(), win.row(i));
        }
        out.push_back(std::move(win));
    }
    return out;
}

void normalize_apply(const NormStats& stats, std::vector<Matrix>& windows) {
    for (Matrix& w : windows) {
        if (w.cols() != stats.mean.size()) {
            throw DimensionError("normalize_apply: feature width mismatch");
        }
        for (std::size_t i = 0; i < w.rows(); ++i) {
            double* row = w.row(i);
            for (std::size_t j = 0; j < w.cols(); ++j) {
                row[j] = (row[j] - stats.mean[j]) * stats.scale[j];
            }
        }
    }
}

NormStats normalize_fit_apply(std::vector<Matrix>& train, std::vector<Matrix>& test) {
    if (train.empty()) throw InputError("normalize_fit_apply: no training windows");
    const std::size_t dims = train.front().cols();

    NormStats stats;
    stats.mean.assign(dims, 0.0);
    stats.scale.assign(dims, 0.0);

    std::size_t count = 0;
    for (const Matrix& w : train) {
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double* row = w.row(i);
            for (std::size_t j = 0; j < dims; ++j) stats.mean[j] += row[j];
        }
        count += w.rows();
    }
    for (double& m : stats.mean) m /= static_cast<double>(count);

    Vector var(dims, 0.0);
    for (const Matrix& w : train) {
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double* row = w.row(i);
            for (std::size_t j = 0; j < dims; ++j) {
                const double d = row[j] - stats.mean[j];
                var[j] += d * d;
            }
        }
    }
    for (std::size_t j = 0; j < dims; ++j) {
        var[j] /= static_cast<double>(count);
        stats.scale[j] = var[j] > 1e-30 ? 1.0 / std::sqrt(var[j]) : 0.0;
    }

    normalize_apply(stats, train);
    normalize_apply(stats, test);
    return stats;
}

Split split(const std::vector<BimodalSample>& samples, double train_fraction,
            std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InputError("split: train_fraction must be in (0, 1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        by_class[samples[i].label].push_back(i);
    }
    if (by_class.empty()) throw InputError("split: no samples");

    Rng rng(seed);
    Split out;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2) {
            throw InputError("split: class " + std::to_string(label) +
                             " has fewer than 2 samples");
        }
        rng.shuffle(idx);
        auto train_n = static_cast<std::size_t>(
            std::llround(train_fraction * static_cast<double>(idx.size())));
        train_n = std::clamp<std::size_t>(train_n, 1, idx.size() - 1);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < train_n ? out.train : out.test).push_back(samples[idx[k]]);
        }
    }
    return out;
}

std::vector<BimodalSample> synth_bimodal(const SynthSpec& spec) {
    if (spec.classes < 1 || spec.samples_per_class < 1) {
        throw InputError("synth_bimodal: classes and samples_per_class must be >= 1");
    }
    if (spec.separation < 0.0) throw InputError("synth_bimodal: separation must be >= 0");

    Rng rng(spec.seed);

    // Class offset directions: orthonormal while the feature dimension
    // allows, random units beyond that.
    const auto make_directions = [&rng](std::size_t classes, std::size_t dim) {
        std::vector<Vector> dirs;
        for (std::size_t c = 0; c < classes; ++c) {
            Vector d(dim);
            for (double& x : d) x = rng.normal();
            for (std::size_t prev = 0; prev < dirs.size() && prev < dim; ++prev) {
                const double proj = numkit::dot(d, dirs[prev]);
                for (std::size_t j = 0; j < dim; ++j) d[j] -= proj * dirs[prev][j];
            }
            double norm = std::sqrt(numkit::dot(d, d));
            while (norm < 1e-9) {  // degenerate draw; redraw
                for (double& x : d) x = rng.normal();
                norm = std::sqrt(numkit::dot(d, d));
            }
            for (double& x : d) x /= norm;
            dirs.push_back(std::move(d));
        }
        return dirs;
    };
    const auto dirs1 = make_directions(spec.classes, spec.dim_p);
    const auto dirs2 = make_directions(spec.classes, spec.dim_q);

    // AR(1) noise around the class offset, started from its stationary law.
    constexpr double kRho = 0.5;
    constexpr double kNoiseStd = 0.5;
    const double stationary_std = kNoiseStd / std::sqrt(1.0 - kRho * kRho);

    const auto gen_channel = [&](const Vector& dir, double separation,
                                 std::size_t frames, std::size_t dim) {
        Matrix x(frames, dim);
        Vector state(dim);
        for (double& s : state) s = stationary_std * rng.normal();
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t j = 0; j < dim; ++j) {
                x(t, j) = separation * dir[j] + state[j];
                state[j] = kRho * state[j] + kNoiseStd * rng.normal();
            }
        }
        return x;
    };

    std::vector<BimodalSample> out;
    out.reserve(spec.classes * spec.samples_per_class);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            BimodalSample sample;
            sample.label = static_cast<int>(c);
            sample.x1 = gen_channel(dirs1[c], spec.separation, spec.timesteps1, spec.dim_p);
            sample.x2 = gen_channel(dirs2[c], spec.separation, spec.timesteps2, spec.dim_q);
            out.push_back(std::move(sample));
        }
    }
    return out;
}

}  // namespace gaitfuse::ingest
