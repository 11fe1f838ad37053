#include <doctest.h>

#include <cstring>
#include <set>
#include <vector>

#include "poisonbench/rng.hpp"

using namespace poisonbench;

// Golden values from an independent reference implementation of
// FNV-1a + murmur finalizer and splitmix-seeded xoshiro256++.
TEST_CASE("hash64 golden values") {
  CHECK(hash64("", 0) == 0xefd01f60ba992926ULL);
  CHECK(hash64("poisonbench", 11) == 0x84d4a0966ab21b42ULL);
  CHECK(hash64("abc", 3, 7) == 0xe2b37b825f76aa45ULL);
}

TEST_CASE("hash64 sensitivity") {
  CHECK(hash64("abc", 3) != hash64("abd", 3));
  CHECK(hash64("abc", 3, 0) != hash64("abc", 3, 1));
  CHECK(hash64("a", 1) != hash64("a\0", 2));
}

TEST_CASE("hash64_combine golden values and asymmetry") {
  CHECK(hash64_combine(1, 2) == 0xf9122d6051144cc9ULL);
  CHECK(hash64_combine(2, 1) == 0x4c5ec34062e859d9ULL);
  CHECK(hash64_combine(1, 2) != hash64_combine(2, 1));
}

TEST_CASE("hash_hex format") {
  CHECK(hash_hex(0) == "0000000000000000");
  CHECK(hash_hex(0xdeadbeefULL) == "00000000deadbeef");
  CHECK(hash_hex(0xffffffffffffffffULL) == "ffffffffffffffff");
}

TEST_CASE("streaming hasher matches one-shot") {
  const char* msg = "poisonbench";
  Hasher h(0);
  h.update(msg, 5);
  h.update(msg + 5, 6);
  CHECK(h.digest() == hash64(msg, 11));

  Hasher h2(9);
  uint64_t v = 0x0123456789abcdefULL;
  h2.update_u64(v);
  unsigned char buf[8];
  std::memcpy(buf, &v, 8);
  CHECK(h2.digest() == hash64(buf, 8, 9));
}

TEST_CASE("xoshiro golden stream") {
  Rng rng(42);
  CHECK(rng.next_u64() == 0xd0764d4f4476689fULL);
  CHECK(rng.next_u64() == 0x519e4174576f3791ULL);
  CHECK(rng.next_u64() == 0xfbe07cfb0c24ed8cULL);
  Rng rng2(42);
  CHECK(rng2.uniform01() == doctest::Approx(0.8143051451229099).epsilon(1e-15));
}

TEST_CASE("rng determinism and seed separation") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform01 range and uniform bounds") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double v = rng.uniform(-2.5, 3.5);
    CHECK(v >= -2.5);
    CHECK(v < 3.5);
  }
}

TEST_CASE("uniform_int bounds and small-n coverage") {
  Rng rng(11);
  std::set<uint64_t> seen;
  for (int i = 0; i < 400; ++i) {
    uint64_t v = rng.uniform_int(5);
    CHECK(v < 5);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
  CHECK(rng.uniform_int(0) == 0);
  CHECK(rng.uniform_int(1) == 0);
}

TEST_CASE("normal moments") {
  Rng rng(99);
  const int n = 20000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("fork produces independent deterministic streams") {
  Rng parent(5);
  Rng f1 = parent.fork(1);
  Rng f2 = parent.fork(2);
  Rng f1_again = Rng(5).fork(1);
  CHECK(f1.next_u64() == f1_again.next_u64());
  Rng g1 = Rng(5).fork(1), g2 = Rng(5).fork(2);
  bool differ = false;
  for (int i = 0; i < 16; ++i) differ = differ || (g1.next_u64() != g2.next_u64());
  CHECK(differ);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;
  Rng r1(3), r2(3);
  r1.shuffle(v);
  r2.shuffle(w);
  CHECK(v == w);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
  bool moved = false;
  for (int i = 0; i < 50; ++i) moved = moved || (v[i] != i);
  CHECK(moved);
}
