#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dbloss/tensor.hpp"

namespace dbloss {

/// Multichannel series as loaded from disk: a [rows, channels] value matrix
/// with one timestamp string per row (informational only).
struct RawSeries {
    std::vector<std::string> timestamps;
    std::vector<std::string> channel_names;
    std::vector<double> values;  // row-major [rows, channels]
    std::size_t rows = 0;
    std::size_t channels = 0;

    double at(std::size_t row, std::size_t channel) const {
        return values[row * channels + channel];
    }
};

/// Load a CSV with header `date,<c1>,...,<cN>`, comma separated, one row per
/// line. Parse failures name the offending physical line.
RawSeries load_csv(const std::string& path);

/// Write a series back out in the same format, round-trip precision.
void write_csv(const RawSeries& series, const std::string& path);

/// Keep only the leading `length` rows; IngestionError if the series is
/// shorter than that.
RawSeries truncate_series(RawSeries series, std::size_t length);

/// Chronological split ratios. Accepts proportional parts ("6:2:2") and
/// normalizes them to sum to 1.
struct SplitSpec {
    double train_ratio = 0.6;
    double val_ratio = 0.2;
    double test_ratio = 0.2;

    static SplitSpec parse(const std::string& text);
    std::string to_string() const;
    void validate() const;
};

/// Per-channel mean and population standard deviation, computed on the train
/// segment only. Constant channels are rejected at construction.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    double apply(double v, std::size_t channel) const {
        return (v - mean[channel]) / stddev[channel];
    }
    double invert(double v, std::size_t channel) const {
        return v * stddev[channel] + mean[channel];
    }
};

/// Split boundaries at floor(train*L) and floor((train+val)*L).
struct SplitBounds {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

struct SegmentedSeries {
    std::vector<double> normalized;  // full series, z-scored with train stats
    std::size_t rows = 0;
    std::size_t channels = 0;
    SplitBounds bounds;
    NormStats stats;
};

SegmentedSeries split_and_normalize(const RawSeries& raw, const SplitSpec& spec);

enum class Segment { Train, Val, Test };
const char* to_string(Segment seg);

/// One batch of forecasting windows: inputs [b,T,N] and targets [b,F,N].
struct Batch {
    Tensor inputs;
    Tensor targets;
    std::size_t window_count = 0;
};

/// Normalized segments plus the sliding-window sampler. A window with input
/// [t-T, t) and target [t, t+F) belongs to the segment containing its target
/// start t; val/test inputs may reach back into the preceding segment, and no
/// target crosses a segment end.
class WindowedDataset {
public:
    static WindowedDataset build(const RawSeries& raw, const SplitSpec& spec,
                                 std::size_t lookback, std::size_t horizon);

    std::size_t lookback() const { return lookback_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t channels() const { return series_.channels; }
    std::size_t rows() const { return series_.rows; }
    const NormStats& stats() const { return series_.stats; }
    const SplitBounds& bounds() const { return series_.bounds; }

    std::size_t window_count(Segment seg) const;
    /// Global target start of the segment's k-th window.
    std::size_t window_target_start(Segment seg, std::size_t k) const;

    /// Batches over a segment, in window order, or shuffled by a seeded
    /// deterministic generator when `shuffle_seed` is given. The final short
    /// batch is kept. Iterators hold private cursors and may run
    /// concurrently over one dataset.
    class BatchIterator {
    public:
        std::optional<Batch> next();

    private:
        BatchIterator(const WindowedDataset* ds, std::vector<std::size_t> order,
                      std::size_t batch_size)
            : ds_(ds), order_(std::move(order)), batch_size_(batch_size) {}
        const WindowedDataset* ds_;
        std::vector<std::size_t> order_;  // global target starts
        std::size_t batch_size_;
        std::size_t cursor_ = 0;
        friend class WindowedDataset;
    };

    BatchIterator batches(Segment seg, std::size_t batch_size,
                          std::optional<std::uint64_t> shuffle_seed = std::nullopt) const;

    /// Materialize one window pair by global target start.
    void fill_window(std::size_t target_start, double* input_rows, double* target_rows) const;

private:
    WindowedDataset() = default;
    SegmentedSeries series_;
    std::size_t lookback_ = 0;
    std::size_t horizon_ = 0;
};

/// Deterministic multichannel series with hourly seasonality, slow trends and
/// autoregressive noise; stands in for transformer-telemetry style data in
/// tests and demos.
RawSeries synthetic_series(std::size_t rows, std::size_t channels, std::uint64_t seed);

}  // namespace dbloss
