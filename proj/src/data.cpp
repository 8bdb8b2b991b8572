#include "dbloss/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbloss/rng.hpp"

namespace dbloss {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

double parse_cell(const std::string& cell, std::size_t line_no, std::size_t column) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    // tolerate leading whitespace; from_chars itself is locale-independent
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    while (ptr < end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
    if (ec != std::errc{} || ptr != end) {
        throw IngestionError("row " + std::to_string(line_no) + ": non-numeric value '" + cell +
                             "' in column " + std::to_string(column + 1));
    }
    if (!std::isfinite(v)) {
        throw IngestionError("row " + std::to_string(line_no) + ": non-finite value in column " +
                             std::to_string(column + 1));
    }
    return v;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

void format_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

RawSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw IngestionError("'" + path + "' is empty");
    line = strip_cr(line);

    const auto header = split_fields(line);
    if (header.empty() || header[0] != "date") {
        throw IngestionError("'" + path + "': first column must be 'date'");
    }
    if (header.size() < 2) {
        throw IngestionError("'" + path + "': no value columns after 'date'");
    }

    RawSeries series;
    series.channels = header.size() - 1;
    series.channel_names.assign(header.begin() + 1, header.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != series.channels + 1) {
            throw IngestionError("row " + std::to_string(line_no) + ": expected " +
                                 std::to_string(series.channels + 1) + " fields, got " +
                                 std::to_string(fields.size()));
        }
        series.timestamps.push_back(fields[0]);
        for (std::size_t c = 0; c < series.channels; ++c) {
            series.values.push_back(parse_cell(fields[c + 1], line_no, c));
        }
        ++series.rows;
    }
    if (series.rows == 0) throw IngestionError("'" + path + "' contains no data rows");
    return series;
}

void write_csv(const RawSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write '" + path + "'");
    std::string buf = "date";
    for (const auto& name : series.channel_names) {
        buf += ',';
        buf += name;
    }
    buf += '\n';
    for (std::size_t r = 0; r < series.rows; ++r) {
        buf += series.timestamps[r];
        for (std::size_t c = 0; c < series.channels; ++c) {
            buf += ',';
            format_double(buf, series.at(r, c));
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
    if (!out) throw IngestionError("failed while writing '" + path + "'");
}

RawSeries truncate_series(RawSeries series, std::size_t length) {
    if (series.rows < length) {
        throw IngestionError("series has " + std::to_string(series.rows) +
                             " rows, fewer than the requested benchmark length " +
                             std::to_string(length));
    }
    series.rows = length;
    series.timestamps.resize(length);
    series.values.resize(length * series.channels);
    return series;
}

SplitSpec SplitSpec::parse(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) {
        try {
            parts.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse split '" + text + "' (expected a:b:c)");
        }
    }
    if (parts.size() != 3) throw ConfigError("split '" + text + "' must have three parts a:b:c");
    const double total = parts[0] + parts[1] + parts[2];
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw ConfigError("split '" + text + "' has a non-positive sum");
    }
    SplitSpec spec{parts[0] / total, parts[1] / total, parts[2] / total};
    spec.validate();
    return spec;
}

std::string SplitSpec::to_string() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.17g:%.17g:%.17g", train_ratio, val_ratio, test_ratio);
    return buf;
}

void SplitSpec::validate() const {
    if (!(train_ratio > 0.0 && val_ratio > 0.0 && test_ratio > 0.0)) {
        throw ConfigError("split ratios must all be positive");
    }
    if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1");
    }
}

const char* to_string(Segment seg) {
    switch (seg) {
        case Segment::Train: return "train";
        case Segment::Val: return "val";
        case Segment::Test: return "test";
    }
    return "?";
}

SegmentedSeries split_and_normalize(const RawSeries& raw, const SplitSpec& spec) {
    spec.validate();
    if (raw.rows == 0 || raw.channels == 0) throw IngestionError("series is empty");

    SegmentedSeries out;
    out.rows = raw.rows;
    out.channels = raw.channels;
    const double rows = static_cast<double>(raw.rows);
    out.bounds.train_end = static_cast<std::size_t>(std::floor(spec.train_ratio * rows));
    out.bounds.val_end =
        static_cast<std::size_t>(std::floor((spec.train_ratio + spec.val_ratio) * rows));
    if (out.bounds.train_end == 0 || out.bounds.train_end >= out.bounds.val_end ||
        out.bounds.val_end >= raw.rows) {
        throw ConfigError("split produces an empty segment for " + std::to_string(raw.rows) +
                          " rows");
    }

    const std::size_t train_rows = out.bounds.train_end;
    out.stats.mean.assign(raw.channels, 0.0);
    out.stats.stddev.assign(raw.channels, 0.0);
    for (std::size_t r = 0; r < train_rows; ++r) {
        for (std::size_t c = 0; c < raw.channels; ++c) out.stats.mean[c] += raw.at(r, c);
    }
    for (std::size_t c = 0; c < raw.channels; ++c) {
        out.stats.mean[c] /= static_cast<double>(train_rows);
    }
    for (std::size_t r = 0; r < train_rows; ++r) {
        for (std::size_t c = 0; c < raw.channels; ++c) {
            const double d = raw.at(r, c) - out.stats.mean[c];
            out.stats.stddev[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < raw.channels; ++c) {
        out.stats.stddev[c] = std::sqrt(out.stats.stddev[c] / static_cast<double>(train_rows));
        if (!(out.stats.stddev[c] > 1e-12)) {
            throw IngestionError("channel '" +
                                 (c < raw.channel_names.size() ? raw.channel_names[c]
                                                               : std::to_string(c)) +
                                 "' is constant on the train segment");
        }
    }

    out.normalized.resize(raw.values.size());
    for (std::size_t r = 0; r < raw.rows; ++r) {
        for (std::size_t c = 0; c < raw.channels; ++c) {
            out.normalized[r * raw.channels + c] = out.stats.apply(raw.at(r, c), c);
        }
    }
    return out;
}

WindowedDataset WindowedDataset::build(const RawSeries& raw, const SplitSpec& spec,
                                       std::size_t lookback, std::size_t horizon) {
    if (lookback == 0 || horizon == 0) {
        throw ConfigError("lookback and horizon must be positive");
    }
    WindowedDataset ds;
    ds.series_ = split_and_normalize(raw, spec);
    ds.lookback_ = lookback;
    ds.horizon_ = horizon;

    const auto& b = ds.series_.bounds;
    const std::size_t lengths[3] = {b.train_end, b.val_end - b.train_end, ds.series_.rows - b.val_end};
    const char* names[3] = {"train", "val", "test"};
    for (int s = 0; s < 3; ++s) {
        if (lengths[s] < lookback + horizon) {
            throw ConfigError(std::string(names[s]) + " segment has " +
                              std::to_string(lengths[s]) + " rows, fewer than lookback+horizon = " +
                              std::to_string(lookback + horizon));
        }
    }
    return ds;
}

std::size_t WindowedDataset::window_count(Segment seg) const {
    const auto& b = series_.bounds;
    switch (seg) {
        case Segment::Train: return b.train_end - horizon_ - lookback_ + 1;
        case Segment::Val: return (b.val_end - b.train_end) - horizon_ + 1;
        case Segment::Test: return (series_.rows - b.val_end) - horizon_ + 1;
    }
    return 0;
}

std::size_t WindowedDataset::window_target_start(Segment seg, std::size_t k) const {
    if (k >= window_count(seg)) throw ContractError("window index out of range");
    const auto& b = series_.bounds;
    switch (seg) {
        case Segment::Train: return lookback_ + k;  // inputs must fit at the series start
        case Segment::Val: return b.train_end + k;  // inputs borrow back into train
        case Segment::Test: return b.val_end + k;   // inputs borrow back into val
    }
    return 0;
}

void WindowedDataset::fill_window(std::size_t target_start, double* input_rows,
                                  double* target_rows) const {
    const std::size_t chans = series_.channels;
    const double* base = series_.normalized.data();
    const double* input_src = base + (target_start - lookback_) * chans;
    std::copy(input_src, input_src + lookback_ * chans, input_rows);
    const double* target_src = base + target_start * chans;
    std::copy(target_src, target_src + horizon_ * chans, target_rows);
}

WindowedDataset::BatchIterator WindowedDataset::batches(
    Segment seg, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) const {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    const std::size_t count = window_count(seg);
    if (count == 0) throw ConfigError("segment has no usable windows");

    std::vector<std::size_t> order(count);
    for (std::size_t k = 0; k < count; ++k) order[k] = window_target_start(seg, k);
    if (shuffle_seed) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order);
    }
    return BatchIterator(this, std::move(order), batch_size);
}

std::optional<Batch> WindowedDataset::BatchIterator::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    const std::size_t chans = ds_->channels();
    const std::size_t t = ds_->lookback_;
    const std::size_t f = ds_->horizon_;

    std::vector<double> inputs(take * t * chans);
    std::vector<double> targets(take * f * chans);
    for (std::size_t i = 0; i < take; ++i) {
        ds_->fill_window(order_[cursor_ + i], inputs.data() + i * t * chans,
                         targets.data() + i * f * chans);
    }
    cursor_ += take;

    Batch batch;
    batch.inputs = Tensor({take, t, chans}, std::move(inputs));
    batch.targets = Tensor({take, f, chans}, std::move(targets));
    batch.window_count = take;
    return batch;
}

RawSeries synthetic_series(std::size_t rows, std::size_t channels, std::uint64_t seed) {
    if (rows == 0 || channels == 0) throw ConfigError("synthetic series needs rows and channels");
    constexpr double kTau = 6.283185307179586;

    Rng rng(seed);
    struct ChannelShape {
        double base, slope, daily, half_daily, weekly;
        double phase_d, phase_h, phase_w;
        double noise_sigma, common_mix;
    };
    std::vector<ChannelShape> shapes(channels);
    for (auto& s : shapes) {
        s.base = rng.next_uniform(-3.0, 3.0);
        s.slope = rng.next_uniform(-2.0, 2.0);
        s.daily = rng.next_uniform(0.6, 2.2);
        s.half_daily = rng.next_uniform(0.1, 0.7);
        s.weekly = rng.next_uniform(0.2, 1.2);
        s.phase_d = rng.next_uniform(0.0, kTau);
        s.phase_h = rng.next_uniform(0.0, kTau);
        s.phase_w = rng.next_uniform(0.0, kTau);
        s.noise_sigma = rng.next_uniform(0.15, 0.45);
        s.common_mix = rng.next_uniform(0.2, 0.8);
    }

    RawSeries series;
    series.rows = rows;
    series.channels = channels;
    series.values.resize(rows * channels);
    series.timestamps.resize(rows);
    series.channel_names.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) series.channel_names[c] = "ch" + std::to_string(c);

    std::vector<double> ar(channels, 0.0);
    double common_ar = 0.0;
    const double rho = 0.88;
    for (std::size_t t = 0; t < rows; ++t) {
        char stamp[32];
        std::snprintf(stamp, sizeof(stamp), "2016-07-01 %02zu:00:00", t % 24);
        series.timestamps[t] = stamp;

        common_ar = rho * common_ar + 0.25 * rng.next_normal();
        const double progress = static_cast<double>(t) / static_cast<double>(rows);
        for (std::size_t c = 0; c < channels; ++c) {
            const auto& s = shapes[c];
            ar[c] = rho * ar[c] + s.noise_sigma * rng.next_normal();
            const double td = static_cast<double>(t);
            double v = s.base + s.slope * progress;
            v += s.daily * std::sin(kTau * td / 24.0 + s.phase_d);
            v += s.half_daily * std::sin(kTau * td / 12.0 + s.phase_h);
            v += s.weekly * std::sin(kTau * td / 168.0 + s.phase_w);
            v += ar[c] + s.common_mix * common_ar;
            series.values[t * channels + c] = v;
        }
    }
    return series;
}

}  // namespace dbloss
