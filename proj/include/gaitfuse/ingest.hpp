#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaitfuse/numkit.hpp"

namespace gaitfuse::ingest {

using numkit::Matrix;
using numkit::Vector;

// One subject-level recording: two synchronized measurement channels plus a
// class label. Frame counts of the two channels are independent.
struct BimodalRecord {
    std::string subject_id;
    int label = 0;
    Matrix channel1;  // frames x P
    Matrix channel2;  // frames x Q
    double sample_rate1_hz = 1.0;
    double sample_rate2_hz = 1.0;
};

// One windowed training/test unit.
struct BimodalSample {
    Matrix x1;  // timestep1 x P
    Matrix x2;  // timestep2 x Q
    int label = 0;
};

struct GaitnddLoadOptions {
    // Frames with any |value| above outlier_factor times the column's median
    // absolute value are dropped. <= 0 disables the cleaning pass.
    double outlier_factor = 10.0;
};

struct LoadedChannel {
    BimodalRecord record;        // channel1 filled; channel2 left empty
    std::size_t skipped_lines = 0;
    std::size_t dropped_frames = 0;
};

// Stride-interval text format: whitespace-separated numeric lines, first
// column elapsed seconds (validated monotone non-decreasing, then dropped),
// remaining 12 columns become one frame. Malformed lines are skipped and
// counted.
LoadedChannel load_gaitndd_record(const std::string& path, int label,
                                  const GaitnddLoadOptions& opts = {});

struct CsvOptions {
    bool has_header = false;
    char delimiter = ',';
    // Columns to keep, in order. Use names (requires header) or indices; if
    // names is non-empty it wins.
    std::vector<std::string> names;
    std::vector<std::size_t> indices;  // empty means all columns
};

// Generic delimiter-separated numeric table. Ragged rows and unknown columns
// are errors.
Matrix load_csv_channel(const std::string& path, const CsvOptions& opts = {});

// Contiguous sliding windows. frames < timestep yields an empty list (the
// caller reports it in the dataset manifest); that is not an error.
std::vector<Matrix> window(const Matrix& channel, std::size_t timestep, std::size_t stride);

struct NormStats {
    Vector mean;
    Vector scale;  // 1/std, or 0 for degenerate features
};

// Fit per-feature z-score statistics on the training windows only, then apply
// them to both partitions in place. Zero-variance features map to 0.
NormStats normalize_fit_apply(std::vector<Matrix>& train, std::vector<Matrix>& test);
void normalize_apply(const NormStats& stats, std::vector<Matrix>& windows);

// Stratified train/test split, deterministic for a given seed.
struct Split {
    std::vector<BimodalSample> train;
    std::vector<BimodalSample> test;
};
Split split(const std::vector<BimodalSample>& samples, double train_fraction,
            std::uint64_t seed);

struct SynthSpec {
    std::size_t classes = 4;
    std::size_t samples_per_class = 200;
    std::size_t timesteps1 = 10;
    std::size_t timesteps2 = 10;
    std::size_t dim_p = 6;
    std::size_t dim_q = 6;
    double separation = 5.0;
    std::uint64_t seed = 42;
};

// Synthetic bimodal dataset: each class draws both channels from an AR(1)
// process around a class-specific offset of magnitude `separation`. With
// separation 0 every class is statistically identical.
std::vector<BimodalSample> synth_bimodal(const SynthSpec& spec);

}  // namespace gaitfuse::ingest
