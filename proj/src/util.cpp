#include "knnseq/util.hpp"

#include <atomic>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace knnseq {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const int w = std::min<std::size_t>(resolve_workers(workers), n == 0 ? 1 : n);
  if (w <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  threads.reserve(w);
  for (int t = 0; t < w; ++t) {
    threads.emplace_back([&] {
      // Chunked work stealing; chunk size trades scheduling overhead
      // against load balance.
      const std::size_t chunk = std::max<std::size_t>(1, n / (8 * static_cast<std::size_t>(w)));
      for (;;) {
        const std::size_t begin = next.fetch_add(chunk);
        if (begin >= n || failed.load()) break;
        const std::size_t end = std::min(n, begin + chunk);
        try {
          for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          if (!failed.exchange(true)) {
            error = std::current_exception();
          }
          break;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (failed.load() && error) {
    std::rethrow_exception(error);
  }
}

namespace binio {

namespace {

void write_bytes_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_bytes_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) {
    throw std::runtime_error("binio: unexpected end of file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) { write_bytes_le(out, v); }

void write_i64(std::ostream& out, std::int64_t v) {
  write_bytes_le(out, static_cast<std::uint64_t>(v));
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_bytes_le(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::istream& in) { return read_bytes_le(in); }

std::int64_t read_i64(std::istream& in) { return static_cast<std::int64_t>(read_bytes_le(in)); }

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_bytes_le(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) {
    throw std::runtime_error("binio: unexpected end of file reading string");
  }
  return s;
}

}  // namespace binio

}  // namespace knnseq
