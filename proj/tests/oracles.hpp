/*
 * Copyright 2026 The faaschain Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Reference implementations the suites compare against. Each is written
// from the definition of the quantity, not from the library code.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Published SHA-256 test vectors.
struct DigestVector {
  std::string input;
  std::string hex;
};

inline const std::vector<DigestVector>& sha256_vectors() {
  static const std::vector<DigestVector> v = {
      {"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"},
      {"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"},
      {"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
       "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"},
      {"The quick brown fox jumps over the lazy dog",
       "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592"},
  };
  return v;
}

// Plain trial division over every integer d >= 2.
inline std::vector<std::uint64_t> factorize(std::uint64_t n) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t d = 2; d <= n / d; ++d) {
    while (n % d == 0) {
      out.push_back(d);
      n /= d;
    }
  }
  if (n > 1) out.push_back(n);
  return out;
}

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

inline std::uint64_t powmod(std::uint64_t b, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  b %= m;
  while (e) {
    if (e & 1) r = mulmod(r, b, m);
    b = mulmod(b, b, m);
    e >>= 1;
  }
  return r;
}

// Miller-Rabin with the first twelve primes as bases; deterministic for
// every n < 2^64.
inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  static const std::uint64_t bases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (auto p : bases) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (auto a : bases) {
    auto x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// Operands per the documented generation rule: std::mt19937 seeded through
// seed_seq{low 32 bits, high 32 bits}, A filled row-major first, then B, each
// draw reinterpreted as int32.
struct Operands {
  std::vector<std::int32_t> a, b;
};

inline Operands matrix_operands(std::int64_t size, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937 gen(seq);
  Operands ops;
  for (std::int64_t i = 0; i < size * size; ++i) ops.a.push_back(static_cast<std::int32_t>(gen()));
  for (std::int64_t i = 0; i < size * size; ++i) ops.b.push_back(static_cast<std::int32_t>(gen()));
  return ops;
}

// Naive triple loop; entries and checksum in wrapping 64-bit arithmetic.
inline std::uint64_t matrix_checksum(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b,
                                     std::int64_t n) {
  std::uint64_t sum = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      std::uint64_t c = 0;
      for (std::int64_t k = 0; k < n; ++k) {
        c += static_cast<std::uint64_t>(static_cast<std::int64_t>(a[i * n + k]) * b[k * n + j]);
      }
      sum += c;
    }
  }
  return sum;
}

inline std::uint64_t matrix_checksum(std::int64_t size, std::uint64_t seed) {
  auto ops = matrix_operands(size, seed);
  return matrix_checksum(ops.a, ops.b, size);
}

// The chain length a zero-overhead run must take: the least n with W <= n*S.
inline std::int64_t invocations(std::int64_t work, std::int64_t slice) { return (work + slice - 1) / slice; }

// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line
// breaks; records end in CRLF.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
      ++i;
    } else {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace oracle
