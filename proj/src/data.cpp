// SPDX-License-Identifier: Apache-2.0

#include "cdsp/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cdsp/idx.hpp"

namespace cdsp::data {

MixedStream::MixedStream(const std::array<LabeledImageSet, 3>& sets, std::size_t batch_size,
                         std::size_t subsample_per_task, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw std::invalid_argument("MixedStream: batch_size must be > 0");
    std::size_t total = 0;
    std::array<std::size_t, 3> keep{};
    for (int t = 0; t < 3; ++t) {
        const auto& s = sets[t];
        if (s.images.rows != s.labels.size()) {
            throw std::invalid_argument("MixedStream: images/labels length mismatch");
        }
        keep[t] = subsample_per_task == 0 ? s.images.rows : subsample_per_task;
        if (keep[t] > s.images.rows) {
            throw std::invalid_argument("MixedStream: subsample larger than task set");
        }
        total += keep[t];
    }
    flat_inputs_ = Matrix(total, 784);
    flat_tasks_.reserve(total);
    flat_unified_.reserve(total);
    std::size_t row = 0;
    for (int t = 0; t < 3; ++t) {
        const auto& s = sets[t];
        for (std::size_t i = 0; i < keep[t]; ++i, ++row) {
            std::copy_n(s.images.row(i), 784, flat_inputs_.row(row));
            flat_tasks_.push_back(s.task_id);
            flat_unified_.push_back(unified_label(s.task_id, s.labels[i]));
        }
    }
}

std::vector<MixedBatch> MixedStream::epoch(std::size_t epoch_index) const {
    const std::size_t n = flat_inputs_.rows;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (epoch_index + 1)));
    rng.shuffle(order);

    std::vector<MixedBatch> out;
    for (std::size_t start = 0; start < n; start += batch_size_) {
        const std::size_t b = std::min(batch_size_, n - start);
        MixedBatch batch;
        batch.inputs = Matrix(b, 784);
        batch.task_ids.resize(b);
        batch.unified_labels.resize(b);
        for (std::size_t k = 0; k < b; ++k) {
            const std::size_t src = order[start + k];
            std::copy_n(flat_inputs_.row(src), 784, batch.inputs.row(k));
            batch.task_ids[k] = flat_tasks_[src];
            batch.unified_labels[k] = flat_unified_[src];
        }
        out.push_back(std::move(batch));
    }
    return out;
}

std::pair<LabeledImageSet, LabeledImageSet> holdout_split(const LabeledImageSet& set,
                                                          double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw std::invalid_argument("holdout_split: fraction must be in (0,1)");
    }
    const std::size_t n = set.images.rows;
    const std::size_t n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(n * fraction));
    const std::size_t n_train = n - n_hold;
    LabeledImageSet train, hold;
    train.task_id = hold.task_id = set.task_id;
    train.images = Matrix(n_train, 784);
    hold.images = Matrix(n_hold, 784);
    for (std::size_t i = 0; i < n_train; ++i) {
        std::copy_n(set.images.row(i), 784, train.images.row(i));
        train.labels.push_back(set.labels[i]);
    }
    for (std::size_t i = 0; i < n_hold; ++i) {
        std::copy_n(set.images.row(n_train + i), 784, hold.images.row(i));
        hold.labels.push_back(set.labels[n_train + i]);
    }
    return {std::move(train), std::move(hold)};
}

SyntheticConflictPair make_synthetic_conflict(const SyntheticConflictSpec& spec,
                                              std::uint64_t seed) {
    if (spec.shared_block < 1 || spec.shared_block > spec.input_dim) {
        throw std::invalid_argument("make_synthetic_conflict: bad shared_block");
    }
    Rng rng(seed);
    SyntheticConflictPair out;
    out.shared_weights.resize(spec.shared_block);
    for (auto& w : out.shared_weights) w = rng.gaussian();

    Matrix x(spec.n_samples, spec.input_dim);
    for (auto& v : x.data) v = rng.gaussian();

    auto build = [&](double sign) {
        SyntheticConflictTask t;
        t.inputs = x;  // shared inputs make the zero-point gradients exactly opposed
        t.targets.resize(spec.n_samples);
        t.labels.resize(spec.n_samples);
        for (std::size_t i = 0; i < spec.n_samples; ++i) {
            double y = 0.0;
            for (std::size_t k = 0; k < spec.shared_block; ++k) {
                y += out.shared_weights[k] * x.at(i, k);
            }
            y = sign * y + spec.noise * rng.gaussian();
            t.targets[i] = y;
            t.labels[i] = y > 0.0 ? 1 : 0;
        }
        return t;
    };
    out.task_a = build(+1.0);
    out.task_b = build(-1.0);
    return out;
}

std::vector<double> shared_block_gradient(const SyntheticConflictTask& task,
                                          std::size_t shared_block) {
    std::vector<double> g(shared_block, 0.0);
    const std::size_t n = task.inputs.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < shared_block; ++k) {
            g[k] += -task.targets[i] * task.inputs.at(i, k);
        }
    }
    for (auto& v : g) v /= static_cast<double>(n);
    return g;
}

namespace {

constexpr int kSide = 28;

void paint(std::vector<double>& img, int x, int y, double v) {
    // 2x2 blot, clipped to the canvas
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px >= 0 && px < kSide && py >= 0 && py < kSide) {
                img[py * kSide + px] = std::max(img[py * kSide + px], v);
            }
        }
    }
}

// Sparse stroke glyph template from a few persistent random walks.
std::vector<double> glyph_template(Rng& rng) {
    std::vector<double> img(kSide * kSide, 0.0);
    const int n_strokes = 2 + static_cast<int>(rng.index(2));
    for (int s = 0; s < n_strokes; ++s) {
        double px = 6.0 + rng.uniform() * 16.0;
        double py = 6.0 + rng.uniform() * 16.0;
        double angle = rng.uniform() * 6.2831853;
        const int steps = 14 + static_cast<int>(rng.index(10));
        for (int i = 0; i < steps; ++i) {
            paint(img, static_cast<int>(px), static_cast<int>(py), 1.0);
            angle += (rng.uniform() - 0.5) * 0.9;
            px += std::cos(angle) * 1.3;
            py += std::sin(angle) * 1.3;
            px = std::clamp(px, 1.0, 26.0);
            py = std::clamp(py, 1.0, 26.0);
        }
    }
    return img;
}

// Adds a diagonal oriented grating on top of an existing template.
void overlay_grating(std::vector<double>& img, double amplitude) {
    const double theta = 0.6, freq = 4.0;
    const double cx = std::cos(theta), sx = std::sin(theta);
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            const double u = (x * cx + y * sx) / kSide;
            img[y * kSide + x] += amplitude * (0.5 + 0.5 * std::sin(6.2831853 * freq * u));
        }
    }
}

// Adds a short task-cue stroke at a fixed canvas location.
void overlay_tick(std::vector<double>& img, int ox, int oy, double amplitude) {
    for (int i = 0; i < 4; ++i) paint(img, ox + i, oy + i, amplitude);
}

std::vector<double> jitter_sample(const std::vector<double>& tmpl, Rng& rng,
                                  double noise_std) {
    const int dx = static_cast<int>(rng.index(5)) - 2;
    const int dy = static_cast<int>(rng.index(5)) - 2;
    const double amp = 0.75 + 0.25 * rng.uniform();
    std::vector<double> img(kSide * kSide, 0.0);
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            const int sxp = x - dx, syp = y - dy;
            double v = 0.0;
            if (sxp >= 0 && sxp < kSide && syp >= 0 && syp < kSide) {
                v = tmpl[syp * kSide + sxp];
            }
            v = amp * v + noise_std * rng.gaussian();
            img[y * kSide + x] = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

LabeledImageSet make_synthetic_task(int task_id, std::size_t n_per_class,
                                    std::uint64_t seed) {
    if (task_id < 0 || task_id >= kNumTasks) {
        throw std::invalid_argument("make_synthetic_task: task_id out of range");
    }
    LabeledImageSet out;
    out.task_id = task_id;
    out.images = Matrix(n_per_class * kClassesPerTask, 784);
    out.labels.reserve(out.images.rows);

    // Templates are built hierarchically: a dominant per-class base glyph is
    // shared by every task, a mid-weight family glyph is shared only by the
    // sibling tasks 0 and 1, and a light task-private glyph keeps the tasks
    // separable by content. Task 2 belongs to its own family and additionally
    // carries a faint grating overlay as a stationary task cue.
    const double kGlobal = 0.82;
    const double kFamily = 0.12;
    const double kOwn = 0.06;
    const std::uint64_t family = (task_id < 2) ? 0u : 1u;
    std::vector<std::vector<double>> templates(kClassesPerTask);
    for (int c = 0; c < kClassesPerTask; ++c) {
        Rng shared_rng(seed ^ (0x51ed27ULL * (c + 7)));
        Rng family_rng(seed ^ (0x77aa11ULL * (family + 3)) ^ (0x51ed27ULL * (c + 7)));
        Rng own_rng(seed ^ (0xabcd1234ULL * (task_id + 1)) ^ (0x51ed27ULL * (c + 7)));
        const auto base = glyph_template(shared_rng);
        const auto fam = glyph_template(family_rng);
        const auto own = glyph_template(own_rng);
        templates[c].resize(base.size());
        for (std::size_t k = 0; k < base.size(); ++k) {
            templates[c][k] =
                std::min(1.0, kGlobal * base[k] + kFamily * fam[k] + kOwn * own[k]);
        }
        // Small localized tick in a task-specific corner: enough signal for a
        // classifier to infer the task from content, little mass otherwise.
        static const int kTickX[kNumTasks] = {3, 21, 12};
        static const int kTickY[kNumTasks] = {3, 3, 22};
        overlay_tick(templates[c], kTickX[task_id], kTickY[task_id], 0.5);
        if (task_id == 2) overlay_grating(templates[c], 0.10);
    }

    // Interleave classes so every contiguous slice stays class-balanced
    // (tail holdout splits would otherwise see a single class).
    Rng rng(seed ^ (0xfeed0000ULL + task_id));
    std::size_t row = 0;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (int c = 0; c < kClassesPerTask; ++c, ++row) {
            const auto img = jitter_sample(templates[c], rng, 0.05);
            std::copy(img.begin(), img.end(), out.images.row(row));
            out.labels.push_back(c);
        }
    }
    return out;
}

void write_synthetic_dataset(const std::string& dir, std::size_t train_per_class,
                             std::size_t test_per_class, std::uint64_t seed) {
    for (int t = 0; t < kNumTasks; ++t) {
        const auto train = make_synthetic_task(t, train_per_class, seed);
        const auto test = make_synthetic_task(t, test_per_class, seed + 101);
        const std::string base = dir + "/task" + std::to_string(t);
        idx::write_file(base + "-train-images.idx", idx::serialize_images(train.images));
        idx::write_file(base + "-train-labels.idx", idx::serialize_labels(train.labels));
        idx::write_file(base + "-test-images.idx", idx::serialize_images(test.images));
        idx::write_file(base + "-test-labels.idx", idx::serialize_labels(test.labels));
    }
}

}  // namespace cdsp::data
