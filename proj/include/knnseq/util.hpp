#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <iosfwd>
#include <string>

namespace knnseq {

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). fn must be safe to call concurrently for distinct i; results
// keyed by i are identical for any worker count.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int resolve_workers(int requested);

namespace binio {

void write_u64(std::ostream& out, std::uint64_t v);
void write_i64(std::ostream& out, std::int64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);

std::uint64_t read_u64(std::istream& in);
std::int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);

}  // namespace binio

}  // namespace knnseq
