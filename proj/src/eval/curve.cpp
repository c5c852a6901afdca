#include "mslu/eval/curve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "mslu/error.hpp"
#include "mslu/eval/metrics.hpp"
#include "mslu/train/trainer.hpp"

namespace mslu::eval {

std::vector<std::uint8_t> class_key(const slu::Multihot& label, const slu::IntentSchema& schema, bool per_combination) {
  if (per_combination) return label;
  const std::size_t actions = schema.action_count();
  if (label.size() < actions) throw ShapeError("class_key: label shorter than the action bits");
  for (std::size_t i = 0; i < actions; ++i) {
    if (label[i]) return {static_cast<std::uint8_t>(i)};
  }
  throw DataError("class_key: label has no action bit");
}

std::vector<std::size_t> sample_per_class(const std::vector<slu::Multihot>& labels, const slu::IntentSchema& schema,
                                          std::size_t size, std::mt19937_64& rng, bool per_combination,
                                          bool* short_class) {
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[class_key(labels[i], schema, per_combination)].push_back(i);
  std::vector<std::size_t> out;
  bool short_any = false;
  for (auto& [key, members] : classes) {
    std::shuffle(members.begin(), members.end(), rng);
    if (members.size() < size) short_any = true;
    members.resize(std::min(size, members.size()));
    out.insert(out.end(), members.begin(), members.end());
  }
  std::sort(out.begin(), out.end());
  if (short_class) *short_class = short_any;
  return out;
}

std::vector<std::size_t> curve_subset(const std::vector<CurveExample>& pool, const slu::IntentSchema& schema,
                                      std::size_t size, std::uint64_t seed, bool per_combination,
                                      bool* short_class) {
  std::vector<slu::Multihot> labels;
  labels.reserve(pool.size());
  for (const auto& e : pool) labels.push_back(e.target);
  auto rng = train::substream(seed, train::kData, size);
  return sample_per_class(labels, schema, size, rng, per_combination, short_class);
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / double(xs.size() - 1)) : 0.0;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

CurveRepeat run_cell(const std::vector<CurveExample>& pool, const std::vector<CurveExample>& test,
                     const slu::IntentSchema& schema, const CurveOptions& options, std::size_t size,
                     std::size_t repeat) {
  CurveRepeat r;
  r.repeat = repeat;
  r.seed = options.seed + repeat;
  const auto idx = curve_subset(pool, schema, size, r.seed, options.per_combination, &r.short_class);
  std::vector<train::SluExample> train_set;
  for (auto i : idx) {
    train_set.push_back({pool[i].repr, pool[i].target});
    r.subset.push_back(pool[i].id);
  }
  r.train_count = idx.size();

  auto cfg = options.train;
  cfg.seed = r.seed;
  slu::SluHead<float> head(options.head, train::substream(r.seed, train::kInit, size)());
  train::train_slu(head, train_set, {}, schema, cfg);

  std::vector<const decoder::RepresentationSequence*> items;
  std::vector<slu::Multihot> refs;
  for (const auto& e : test) {
    items.push_back(e.repr);
    refs.push_back(e.target);
  }
  const auto report = evaluate(head, items, refs, schema);
  r.micro_f1 = report.micro_f1;
  r.accuracy = report.accuracy;
  return r;
}

}  // namespace

CurveResult learning_curve(const std::vector<CurveExample>& pool, const std::vector<CurveExample>& test,
                           const slu::IntentSchema& schema, const CurveOptions& options,
                           const std::function<void(const std::string&)>& log) {
  if (options.sizes.empty()) throw ConfigError("learning curve: no sizes");
  if (options.repeats == 0) throw ConfigError("learning curve: repeats must be positive");
  for (auto s : options.sizes) {
    if (s == 0) throw ConfigError("learning curve: sizes must be positive");
  }
  if (pool.empty() || test.empty()) throw DataError("learning curve: empty pool or test split");
  std::set<std::string> pool_ids;
  for (const auto& e : pool) pool_ids.insert(e.id);
  for (const auto& e : test) {
    if (pool_ids.count(e.id)) throw DataError("learning curve: test utterance " + e.id + " is also in the pool");
  }
  options.head.validate();
  options.train.validate();

  const std::size_t cells = options.sizes.size() * options.repeats;
  std::vector<CurveRepeat> results(cells);
  std::vector<std::exception_ptr> errors(cells);
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, cells));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c; (c = next++) < cells;) {
      try {
        results[c] = run_cell(pool, test, schema, options, options.sizes[c / options.repeats], c % options.repeats);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool_threads;
    for (std::size_t w = 0; w < workers; ++w) pool_threads.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CurveResult out;
  for (std::size_t s = 0; s < options.sizes.size(); ++s) {
    LearningCurvePoint p;
    p.size = options.sizes[s];
    std::vector<double> f1, acc;
    for (std::size_t r = 0; r < options.repeats; ++r) {
      p.repeats.push_back(std::move(results[s * options.repeats + r]));
      f1.push_back(p.repeats.back().micro_f1);
      acc.push_back(p.repeats.back().accuracy);
      if (p.repeats.back().short_class) {
        out.warnings.push_back("size " + std::to_string(p.size) + " repeat " + std::to_string(r) +
                               ": some class has fewer examples, used all of them");
      }
    }
    mean_std(f1, p.mean_f1, p.std_f1);
    mean_std(acc, p.mean_accuracy, p.std_accuracy);
    if (log) {
      log("size " + std::to_string(p.size) + ": micro-F1 " + format_double(p.mean_f1) + " +- " +
          format_double(p.std_f1) + ", accuracy " + format_double(p.mean_accuracy));
    }
    out.points.push_back(std::move(p));
  }
  for (std::size_t i = 1; i < out.points.size(); ++i) {
    const auto& a = out.points[i - 1];
    const auto& b = out.points[i];
    if (b.size > a.size && b.mean_f1 < a.mean_f1 - b.std_f1) {
      out.monotone = false;
      out.warnings.push_back("mean micro-F1 drops from size " + std::to_string(a.size) + " to " +
                             std::to_string(b.size) + " by more than one std");
    }
  }
  if (log) {
    for (const auto& w : out.warnings) log("warning: " + w);
  }
  return out;
}

std::string curve_csv(const CurveResult& result) {
  std::string out = "size,repeat,seed,micro_f1,accuracy\n";
  for (const auto& p : result.points) {
    for (const auto& r : p.repeats) {
      out += std::to_string(p.size) + "," + std::to_string(r.repeat) + "," + std::to_string(r.seed) + "," +
             format_double(r.micro_f1) + "," + format_double(r.accuracy) + "\n";
    }
  }
  return out;
}

Json to_json(const CurveResult& result, const CurveOptions& options) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["seed"] = options.seed;
  j["repeats"] = options.repeats;
  j["class_key"] = options.per_combination ? "combination" : "action";
  j["points"] = Json::array();
  for (const auto& p : result.points) {
    Json pj{{"size", p.size},
            {"mean_micro_f1", p.mean_f1},
            {"std_micro_f1", p.std_f1},
            {"mean_accuracy", p.mean_accuracy},
            {"std_accuracy", p.std_accuracy},
            {"repeats", Json::array()}};
    for (const auto& r : p.repeats) {
      pj["repeats"].push_back({{"repeat", r.repeat},
                               {"seed", r.seed},
                               {"micro_f1", r.micro_f1},
                               {"accuracy", r.accuracy},
                               {"train_count", r.train_count},
                               {"short_class", r.short_class}});
    }
    j["points"].push_back(std::move(pj));
  }
  j["monotone"] = result.monotone;
  j["warnings"] = result.warnings;
  return j;
}

void write_curve(const std::filesystem::path& dir, const CurveResult& result, const CurveOptions& options) {
  std::filesystem::create_directories(dir / "subsets");
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw Error("cannot write " + path.string());
  };
  write(dir / "curve.csv", curve_csv(result));
  write(dir / "curve.json", to_json(result, options).dump(2) + "\n");
  for (const auto& p : result.points) {
    for (const auto& r : p.repeats) {
      std::string text;
      for (const auto& id : r.subset) text += id + "\n";
      write(dir / "subsets" / ("size" + std::to_string(p.size) + "_repeat" + std::to_string(r.repeat) + ".txt"),
            text);
    }
  }
}

}  // namespace mslu::eval
