#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "advsearch/errors.hpp"

namespace advsearch::harness {

using json = nlohmann::json;

inline constexpr const char* kLibraryVersion = "1.0.0";

// One line per record. Every line except timing fields is a deterministic
// function of the config and seeds.
struct Record {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  json metrics = json::object();
  json timing = json::object();
};

struct Report {
  std::string kind;
  std::string test;
  std::string config_echo;
  std::vector<Record> records;
  json summary = json::object();
  json summary_timing = json::object();
  bool passed = true;
  std::string headline;

  void add(std::uint64_t seed, std::uint64_t step, json metrics, json timing = json::object()) {
    records.push_back({seed, step, std::move(metrics), std::move(timing)});
  }

  void write_jsonl(std::ostream& os) const {
    os << json{{"type", "header"},     {"tool", "advsearch"},
               {"version", kLibraryVersion}, {"kind", kind},
               {"test", test},         {"config_echo", config_echo}}
              .dump()
       << '\n';
    for (const auto& r : records)
      os << json{{"type", "record"}, {"seed", r.seed}, {"step", r.step}, {"metrics", r.metrics}, {"timing", r.timing}}
                .dump()
         << '\n';
    os << json{{"type", "summary"},
               {"passed", passed},
               {"headline", headline},
               {"metrics", summary},
               {"timing", summary_timing}}
              .dump()
       << '\n';
  }

  // Flat table of the per-record metrics and timings (scalars only).
  void write_csv(std::ostream& os) const {
    std::set<std::string> mkeys, tkeys;
    for (const auto& r : records) {
      for (auto it = r.metrics.begin(); it != r.metrics.end(); ++it)
        if (it->is_primitive()) mkeys.insert(it.key());
      for (auto it = r.timing.begin(); it != r.timing.end(); ++it)
        if (it->is_primitive()) tkeys.insert(it.key());
    }
    os << "seed,step";
    for (const auto& k : mkeys) os << ',' << k;
    for (const auto& k : tkeys) os << ",timing_" << k;
    os << '\n';
    auto cell = [&](const json& obj, const std::string& k) {
      if (!obj.contains(k)) return std::string();
      const json& v = obj.at(k);
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    for (const auto& r : records) {
      os << r.seed << ',' << r.step;
      for (const auto& k : mkeys) os << ',' << cell(r.metrics, k);
      for (const auto& k : tkeys) os << ',' << cell(r.timing, k);
      os << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write report " + path);
    write_jsonl(f);
  }

  void save_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write csv " + path);
    write_csv(f);
  }
};

// Removes every "timing" member so two reports can be compared for equality.
inline std::string strip_timing(const std::string& jsonl) {
  std::string out, line;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    line = jsonl.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? jsonl.size() : nl + 1;
    if (line.empty()) continue;
    json j = json::parse(line);
    j.erase("timing");
    out += j.dump() + '\n';
  }
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Runs fn(i) for i in [0, count) on a fixed pool; results come back in index
// order regardless of scheduling. The first exception is rethrown.
template <class Result>
std::vector<Result> parallel_map(std::size_t count, const std::function<Result(std::size_t)>& fn,
                                 std::size_t workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  std::vector<Result> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace advsearch::harness
