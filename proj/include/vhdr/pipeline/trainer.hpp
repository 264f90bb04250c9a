#pragma once

// Training loop. A producer thread synthesizes batches into a bounded queue
// while the trainer consumes them; batch composition depends only on
// (seed, step), so a resumed run replays exactly the batches an
// uninterrupted run would have seen.
//
// Files under cfg.out:
//   train_log.csv   step,L1,Lfeat,LSM,LLM,total (one row per step)
//   val_log.csv     epoch,val_loss,best
//   best.chdr/.cfg  parameters with the lowest validation loss so far
//   last.chdr/.cfg  parameters and Adam moments after the last completed step
//   last.state      step counter and running sums for resume
//   metrics.csv     final metrics on the validation samples

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vhdr/core/errors.hpp"
#include "vhdr/core/random.hpp"
#include "vhdr/io/keyvalue.hpp"
#include "vhdr/losses/losses.hpp"
#include "vhdr/metrics/metrics.hpp"
#include "vhdr/nets/network.hpp"
#include "vhdr/pipeline/config.hpp"
#include "vhdr/pipeline/dataset.hpp"
#include "vhdr/tensor/adam.hpp"
#include "vhdr/tensor/checkpoint.hpp"

namespace vhdr {

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  /// Blocks while full. Returns false once the queue is closed.
  bool push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks while empty. nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct LossRow {
  std::int64_t step = 0;  // 1-based
  double l1 = 0.0, feature = 0.0, short_term = 0.0, long_term = 0.0, total = 0.0;
};

inline std::string format_loss_row(const LossRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.l1, r.feature,
                r.short_term, r.long_term, r.total);
  return buf;
}

inline constexpr const char* kTrainLogHeader = "step,L1,Lfeat,LSM,LLM,total";

inline FeatureExtractor make_feature_extractor(const Config& c) {
  return c.feature_weights.empty() ? FeatureExtractor::standard(c.feature_seed) : FeatureExtractor::load(c.feature_weights);
}

/// Network input and log target for a set of samples.
struct Batch {
  Tensor input;   // N x 3 x F x H x W coded frames
  Tensor target;  // N x 3 x F x H x W log radiance
};

inline Batch make_batch(const std::vector<Sample>& samples) {
  std::vector<Tensor> in, tg;
  for (const auto& s : samples) {
    in.push_back(s.coded.frames);
    tg.push_back(s.target);
  }
  return {clips_to_batch(in), clips_to_batch(tg)};
}

inline void check_finite(const LossTerms& t, std::int64_t step) {
  for (double v : {t.l1, t.feature, t.short_term, t.long_term, t.value}) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss at step " + std::to_string(step));
  }
}

/// Forward, backward and one Adam update.
inline LossRow train_step(Network& net, AdamState& adam, const FeatureExtractor& fx, const LossWeights& lw, double tau,
                          const Batch& b, std::int64_t step) {
  Graph g;
  const NodeId x = g.input(b.input, false);
  const NodeId y = net.forward(g, x);
  const LossTerms t = total_loss(g, y, b.target, lw, fx, tau);
  check_finite(t, step);
  g.backward(t.total);
  adam_step(net.parameters(), g.parameter_grads(), adam);
  return {step, t.l1, t.feature, t.short_term, t.long_term, t.value};
}

/// Weighted total loss without a parameter update.
inline double evaluate_loss(const Network& net, const FeatureExtractor& fx, const LossWeights& lw, double tau, const Batch& b) {
  Graph g;
  const NodeId y = g.input(net.forward(b.input), false);
  return total_loss(g, y, b.target, lw, fx, tau).value;
}

inline NamedTensors named_parameters(const Network& net) {
  NamedTensors t;
  for (const auto& [name, p] : net.parameters()) t.emplace_back(name, p);
  return t;
}

/// Writes to a temporary name, then renames, so a reader never sees a partial file.
template <typename WriteFn>
void write_atomically(const std::filesystem::path& path, WriteFn write) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write(tmp);
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  return p.replace_extension(".cfg");
}

/// Config stored next to a checkpoint, if present.
inline std::optional<Config> read_sidecar(const std::filesystem::path& checkpoint) {
  const auto p = sidecar_path(checkpoint);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return config_from_key_values(read_key_values(p));
  } catch (const UsageError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

struct TrainResult {
  std::int64_t first_step = 0;  // 0-based step this invocation started from
  std::int64_t last_step = 0;   // steps completed in total
  std::vector<LossRow> rows;    // rows produced by this invocation
  std::vector<double> validation;  // per completed epoch in this invocation
  double best_validation = std::numeric_limits<double>::infinity();
  MetricsReport metrics;
};

namespace detail {

// Keys that may differ between an interrupted run and its resumption.
inline KeyValues training_identity(const Config& c) {
  KeyValues kv = to_key_values(c);
  for (const char* k : {"resume", "max_steps", "epochs", "out", "checkpoint", "input", "truth"}) kv.erase(k);
  return kv;
}

// Keeps the header and the first `rows` data lines of a CSV file.
inline std::string truncated_csv(const std::filesystem::path& p, std::size_t rows) {
  std::ifstream in(p);
  if (!in) throw DataError("resume: cannot read " + p.string());
  std::string line, out;
  std::size_t n = 0;
  while (std::getline(in, line) && n <= rows) {
    out += line + "\n";
    ++n;
  }
  if (n != rows + 1) throw DataError("resume: " + p.string() + " has fewer rows than the saved state");
  return out;
}

struct RunState {
  std::int64_t step = 0;
  double epoch_sum = 0.0;
  std::int64_t epoch_count = 0;
  bool has_best = false;
  double best = 0.0;
  std::int64_t adam_step = 0;
};

inline KeyValues state_to_key_values(const RunState& s) {
  KeyValues kv{{"step", std::to_string(s.step)},
               {"epoch_sum", format_number(s.epoch_sum)},
               {"epoch_count", std::to_string(s.epoch_count)},
               {"has_best", s.has_best ? "true" : "false"},
               {"adam_step", std::to_string(s.adam_step)}};
  if (s.has_best) kv["best_val"] = format_number(s.best);
  return kv;
}

inline RunState state_from_key_values(const KeyValues& kv) {
  auto get = [&](const char* k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw DataError(std::string("last.state: missing key '") + k + "'");
    return it->second;
  };
  try {
    RunState s;
    s.step = parse_integer("step", get("step"));
    s.epoch_sum = parse_number("epoch_sum", get("epoch_sum"));
    s.epoch_count = parse_integer("epoch_count", get("epoch_count"));
    s.has_best = parse_bool("has_best", get("has_best"));
    if (s.has_best) s.best = parse_number("best_val", get("best_val"));
    s.adam_step = parse_integer("adam_step", get("adam_step"));
    return s;
  } catch (const UsageError& e) {
    throw DataError(std::string("last.state: ") + e.what());
  }
}

inline const std::string kAdamFirst = "adam.m.";
inline const std::string kAdamSecond = "adam.v.";

}  // namespace detail

/// Trains per `c`, writing into `c.out`. Progress lines go to `progress`.
inline TrainResult train(const Config& c, std::ostream* progress = nullptr) {
  validate(c);
  namespace fs = std::filesystem;
  const fs::path out = c.out;
  fs::create_directories(out);

  const SynthesisConfig scfg = c.synthesis();
  const LossWeights lw = c.loss_weights();
  const FeatureExtractor fx = make_feature_extractor(c);
  const std::vector<Tensor> sources = load_sources(c);
  const auto index = build_dataset(shapes_of(sources), scfg, c.samples, c.mask_mix, c.seed);
  const Split split = split_by_hash(index.size(), c.val_fraction, c.seed);

  const auto n_train = static_cast<std::int64_t>(split.train.size());
  const std::int64_t per_epoch = (n_train + c.batch - 1) / c.batch;
  const std::int64_t total = per_epoch * c.epochs;
  const std::int64_t end = c.max_steps > 0 ? std::min(c.max_steps, total) : total;

  Network net = build_network(c.arch, c.seed);
  AdamState adam;
  adam.learning_rate = c.lr;
  detail::RunState st;

  const fs::path log_path = out / "train_log.csv", val_path = out / "val_log.csv";
  const fs::path last = out / "last.chdr", best = out / "best.chdr";
  if (c.resume) {
    const auto saved = read_sidecar(last);
    if (!saved || !fs::exists(out / "last.state")) throw DataError("resume: no saved run in " + out.string());
    if (detail::training_identity(*saved) != detail::training_identity(c)) {
      throw UsageError("resume: config differs from the saved run (only epochs and max_steps may change)");
    }
    st = detail::state_from_key_values(read_key_values(out / "last.state"));
    const NamedTensors saved_tensors = read_checkpoint(last);
    load_parameters(net, saved_tensors);
    for (const auto& [name, t] : saved_tensors) {
      if (name.starts_with(detail::kAdamFirst)) adam.first_moment[name.substr(detail::kAdamFirst.size())] = t;
      if (name.starts_with(detail::kAdamSecond)) adam.second_moment[name.substr(detail::kAdamSecond.size())] = t;
    }
    adam.step = st.adam_step;
    const std::string log = detail::truncated_csv(log_path, static_cast<std::size_t>(st.step));
    const std::string val = detail::truncated_csv(val_path, static_cast<std::size_t>(st.step / per_epoch));
    std::ofstream(log_path, std::ios::binary | std::ios::trunc) << log;
    std::ofstream(val_path, std::ios::binary | std::ios::trunc) << val;
  } else {
    std::ofstream(log_path, std::ios::binary | std::ios::trunc) << kTrainLogHeader << "\n";
    std::ofstream(val_path, std::ios::binary | std::ios::trunc) << "epoch,val_loss,best\n";
    fs::remove(best);
    fs::remove(sidecar_path(best));
  }
  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  std::ofstream val_log(val_path, std::ios::binary | std::ios::app);
  if (!log || !val_log) throw DataError("cannot write logs in " + out.string());

  auto batch_members = [&](std::int64_t step) {
    const std::int64_t epoch = step / per_epoch, b = step % per_epoch;
    std::vector<std::size_t> perm = split.train;
    Rng rng(derive_seed(c.seed, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(perm.begin(), perm.end());
    const auto lo = static_cast<std::size_t>(b * c.batch);
    const auto hi = std::min(perm.size(), static_cast<std::size_t>((b + 1) * c.batch));
    return std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi));
  };
  auto synth_batch = [&](const std::vector<std::size_t>& members) {
    std::vector<Sample> s;
    for (std::size_t i : members) s.push_back(synthesize_entry(sources, index[i], scfg));
    return make_batch(s);
  };

  std::vector<Batch> val_batches;
  for (std::size_t lo = 0; lo < split.validation.size(); lo += static_cast<std::size_t>(c.batch)) {
    const auto hi = std::min(split.validation.size(), lo + static_cast<std::size_t>(c.batch));
    val_batches.push_back(synth_batch({split.validation.begin() + static_cast<std::ptrdiff_t>(lo),
                                       split.validation.begin() + static_cast<std::ptrdiff_t>(hi)}));
  }

  auto save_last = [&] {
    NamedTensors t = named_parameters(net);
    for (const auto& [name, p] : net.parameters()) {
      if (adam.first_moment.count(name)) t.emplace_back(detail::kAdamFirst + name, adam.first_moment.at(name));
      if (adam.second_moment.count(name)) t.emplace_back(detail::kAdamSecond + name, adam.second_moment.at(name));
    }
    st.adam_step = adam.step;
    write_atomically(last, [&](const fs::path& p) { write_checkpoint(p, t); });
    write_atomically(sidecar_path(last), [&](const fs::path& p) { write_key_values(p, to_key_values(c)); });
    write_atomically(out / "last.state", [&](const fs::path& p) { write_key_values(p, detail::state_to_key_values(st)); });
  };

  TrainResult result;
  result.first_step = st.step;
  if (st.has_best) result.best_validation = st.best;

  BoundedQueue<Batch> queue(2);
  std::exception_ptr producer_error;
  std::thread producer([&, start = st.step] {
    try {
      for (std::int64_t s = start; s < end; ++s) {
        if (!queue.push(synth_batch(batch_members(s)))) return;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct Join {
    BoundedQueue<Batch>& q;
    std::thread& t;
    ~Join() {
      q.close();
      if (t.joinable()) t.join();
    }
  } join{queue, producer};

  const auto t0 = std::chrono::steady_clock::now();
  while (st.step < end) {
    std::optional<Batch> b = queue.pop();
    if (!b) {
      if (producer_error) std::rethrow_exception(producer_error);
      throw DataError("training data producer stopped early");
    }
    const LossRow row = train_step(net, adam, fx, lw, c.tau, *b, st.step + 1);
    log << format_loss_row(row) << "\n";
    result.rows.push_back(row);
    st.epoch_sum += row.total;
    st.epoch_count += 1;
    st.step += 1;
    if (progress && (st.step % 10 == 0 || st.step == end)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *progress << "step " << st.step << "/" << end << " L1 " << row.l1 << " total " << row.total << " (" << secs << " s)\n";
    }

    if (st.step % per_epoch == 0) {
      double v = 0.0;
      if (val_batches.empty()) {
        v = st.epoch_sum / static_cast<double>(st.epoch_count);
      } else {
        double n = 0.0;
        for (const auto& vb : val_batches) {
          const double k = static_cast<double>(vb.input.extent(0));
          v += k * evaluate_loss(net, fx, lw, c.tau, vb);
          n += k;
        }
        v /= n;
      }
      if (!std::isfinite(v)) throw NumericError("non-finite validation loss after step " + std::to_string(st.step));
      if (!st.has_best || v < st.best) {
        st.has_best = true;
        st.best = v;
        write_atomically(best, [&](const fs::path& p) { write_checkpoint(p, named_parameters(net)); });
        write_atomically(sidecar_path(best), [&](const fs::path& p) { write_key_values(p, to_key_values(c)); });
      }
      char buf[128];
      std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g", static_cast<long long>(st.step / per_epoch), v, st.best);
      val_log << buf << "\n";
      result.validation.push_back(v);
      st.epoch_sum = 0.0;
      st.epoch_count = 0;
      save_last();
    }
    log.flush();
    val_log.flush();
  }
  if (st.step % per_epoch != 0 || result.rows.empty()) save_last();
  result.last_step = st.step;
  if (st.has_best) result.best_validation = st.best;

  Network eval = net;
  if (fs::exists(best)) load_parameters(eval, read_checkpoint(best));
  for (std::size_t i = 0; i < split.validation.size(); ++i) {
    const Sample s = synthesize_entry(sources, index[split.validation[i]], scfg);
    const Tensor y = network_to_clip(eval.forward(clip_to_network(s.coded.frames)));
    result.metrics.clips.push_back(evaluate_clip(s.target, y, fx, "val_" + std::to_string(split.validation[i]), c.tau));
  }
  if (!result.metrics.clips.empty()) {
    std::ofstream m(out / "metrics.csv", std::ios::binary | std::ios::trunc);
    m << result.metrics.csv();
  }
  return result;
}

}  // namespace vhdr
