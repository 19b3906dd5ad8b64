#pragma once

#include <atomic>
#include <cctype>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "chainscore/errors.hpp"

namespace chainscore {

/* Calls fn(line_number, parsed_json) for every non-blank line, 1-indexed.
   Parse problems name the file and line. */
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    if (blank) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    fn(line_no, j);
  }
}

/* Index-order-preserving parallel map: out[i] is always fn(i), no matter
   which worker ran it. Exceptions from workers are rethrown to the caller. */
template <typename T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& fn) {
  if (jobs < 1) jobs = 1;
  std::vector<T> out(n);
  if (n == 0) return out;
  if (jobs == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs), nullptr);
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          out[i] = fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace chainscore
