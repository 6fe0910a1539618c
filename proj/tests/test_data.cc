#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "core/error.h"
#include "data/audio.h"
#include "data/manifest.h"
#include "data/synthesis.h"
#include "data/toy_corpus.h"
#include "support.h"

using namespace rssl;
using rssl::testing::TempDir;

namespace {

  AudioClip clip(std::vector<double> s, const std::string& id = "x", int rate = 16000) {
    return AudioClip{std::move(s), rate, id};
  }

  AudioClip unit_sine(std::size_t n, double freq = 440.0) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i)
      s[i] = std::sqrt(2.0) * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / 16000.0);
    return clip(s, "sine");
  }

  // Independent power/SNR oracle in long double.
  double oracle_snr(const std::vector<double>& noisy, const std::vector<double>& clean) {
    long double pc = 0, pn = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      pc += static_cast<long double>(clean[i]) * clean[i];
      const long double d = static_cast<long double>(noisy[i]) - clean[i];
      pn += d * d;
    }
    return static_cast<double>(10.0L * std::log10(pc / pn));
  }

  double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return static_cast<double>(sab / std::sqrt(saa * sbb));
  }

  std::string error_code(const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return "";
  }

}

TEST_CASE("mix_at_snr: equal-power sine at 0 dB uses unit gain") {
  const AudioClip s = unit_sine(1600);
  const NoisyPair p = mix_at_snr(s, s, 0.0, 3);
  CHECK(p.noise_gain == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.noisy.size() == s.size());
}

TEST_CASE("mix_at_snr: unit-power inputs at 20 dB give gain 0.1") {
  const AudioClip s = unit_sine(1600);
  const AudioClip n = unit_sine(1600, 1000.0);
  const NoisyPair p = mix_at_snr(s, n, 20.0, 3);
  CHECK(p.noise_gain == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("mix_at_snr: measured SNR matches the request, with and without clipping") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = clip(testing::random_signal(800 + seed * 7, seed, seed % 2 ? 0.9 : 0.05), "c");
    const auto n = clip(testing::random_signal(300 + seed * 31, 1000 + seed, 0.5), "n");
    const double snr = 5.0 + static_cast<double>(seed % 16);
    const NoisyPair p = mix_at_snr(c, n, snr, seed);
    REQUIRE(p.noisy.size() == c.size());
    CHECK(std::abs(oracle_snr(p.noisy.samples, p.clean.samples) - snr) < 0.01);
    CHECK(std::abs(measured_snr_db(p) - snr) < 1e-9);
    if (p.rescale < 1.0) {
      const double peak = std::abs(*std::max_element(p.noisy.samples.begin(), p.noisy.samples.end(),
                                                     [](double a, double b) { return std::abs(a) < std::abs(b); }));
      CHECK(peak == doctest::Approx(0.99).epsilon(1e-12));
    }
  }
}

TEST_CASE("mix_at_snr: errors") {
  const auto s = unit_sine(100);
  CHECK(error_code([&] { mix_at_snr(clip(std::vector<double>(100, 0.0)), s, 5, 1); }) == "SilentInput");
  CHECK(error_code([&] { mix_at_snr(s, clip(std::vector<double>(100, 0.0)), 5, 1); }) == "SilentInput");
  CHECK(error_code([&] { mix_at_snr(s, clip(s.samples, "n", 8000), 5, 1); }) == "RateMismatch");
}

TEST_CASE("mix_at_snr: seeded offset is deterministic") {
  const auto c = clip(testing::random_signal(500, 1));
  const auto n = clip(testing::random_signal(5000, 2));
  CHECK(mix_at_snr(c, n, 10, 42).noisy.samples == mix_at_snr(c, n, 10, 42).noisy.samples);
  CHECK(mix_at_snr(c, n, 10, 42).noisy.samples != mix_at_snr(c, n, 10, 43).noisy.samples);
}

TEST_CASE("sample_snr: support, uniform frequencies, determinism") {
  Rng rng(11);
  std::vector<int> counts(16, 0);
  const int draws = 16000;
  for (int i = 0; i < draws; ++i) {
    const int v = sample_snr(rng);
    REQUIRE(v >= 5);
    REQUIRE(v <= 20);
    ++counts[v - 5];
  }
  for (int c : counts)
    CHECK(std::abs(static_cast<double>(c) / draws - 1.0 / 16.0) <= 0.01);
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i)
    CHECK(sample_snr(a) == sample_snr(b));
}

TEST_CASE("wav round trip quantizes to 16 bits") {
  TempDir dir("wav");
  const auto c = clip(testing::random_signal(321, 5, 0.3), "w");
  write_wav(dir / "a.wav", c);
  const AudioClip back = read_wav(dir / "a.wav");
  REQUIRE(back.size() == c.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(std::abs(back.samples[i] - c.samples[i]) <= 1.0 / 32768.0);
  std::ofstream(dir / "bad.wav") << "not a wav";
  CHECK(error_code([&] { read_wav(dir / "bad.wav"); }) == "BadWav");
}

TEST_CASE("manifest round trip and validation") {
  TempDir dir("manifest");
  write_wav(dir / "a.wav", clip(testing::random_signal(160, 1)));
  Manifest m;
  ManifestEntry e;
  e.utterance_id = "a";
  e.audio_path = dir / "a.wav";
  e.duration_seconds = 0.01;
  e.transcript = "BAD CAB";
  m.entries.push_back(e);
  save_manifest(m, dir / "m.jsonl");
  const Manifest back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back.entries[0].transcript == std::optional<std::string>("BAD CAB"));
  CHECK(back.entries[0].role == Role::Clean);

  Manifest dup = m;
  dup.entries.push_back(e);
  CHECK(error_code([&] { validate_manifest(dup, false); }) == "BadManifest");
  Manifest missing = m;
  missing.entries[0].audio_path = dir / "nope.wav";
  CHECK(error_code([&] { validate_manifest(missing, true); }) == "BadManifest");
  Manifest zero = m;
  zero.entries[0].duration_seconds = 0.0;
  CHECK(error_code([&] { validate_manifest(zero, false); }) == "BadManifest");
}

TEST_CASE("build_noisy_corpus: 10 clean + 3 noise, bit-identical reruns") {
  TempDir dir("corpus");
  const ToyCorpus toy = make_toy_corpus(dir / "toy", 42, 10, 3);
  CorpusBuildOptions opt;
  opt.seed = 42;
  const auto a = build_noisy_corpus(toy.clean, toy.noise, dir / "a", opt);
  const auto b = build_noisy_corpus(toy.clean, toy.noise, dir / "b", opt);
  REQUIRE(a.manifest.size() == 10);
  CHECK(a.errors.empty());
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& ea = a.manifest.entries[i];
    const auto& eb = b.manifest.entries[i];
    CHECK(testing::read_bytes(ea.audio_path) == testing::read_bytes(eb.audio_path));
    CHECK(testing::read_bytes(*ea.clean_path) == testing::read_bytes(*eb.clean_path));
    CHECK(ea.snr_db == eb.snr_db);
    CHECK(*ea.snr_db >= 5);
    CHECK(*ea.snr_db <= 20);
    CHECK(ea.transcript == toy.clean.entries[i].transcript);
  }
}

TEST_CASE("build_noisy_corpus: empty noise manifest and per-entry isolation") {
  TempDir dir("corpus_err");
  const ToyCorpus toy = make_toy_corpus(dir / "toy", 1, 10, 3);
  CorpusBuildOptions opt;
  CHECK(error_code([&] { build_noisy_corpus(toy.clean, Manifest{}, dir / "x", opt); }) == "EmptyManifest");

  Manifest clean = toy.clean;
  write_wav(dir / "silent.wav", clip(std::vector<double>(4000, 0.0), "silent"));
  clean.entries[4].audio_path = dir / "silent.wav";
  const auto r = build_noisy_corpus(clean, toy.noise, dir / "y", opt);
  CHECK(r.manifest.size() == 9);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].code == "SilentInput");
  CHECK(r.errors[0].utterance_id == clean.entries[4].utterance_id);
}

TEST_CASE("toy corpus: deterministic and valid") {
  TempDir dir("toy");
  const ToyCorpus a = make_toy_corpus(dir / "a", 7, 8, 2);
  const ToyCorpus b = make_toy_corpus(dir / "b", 7, 8, 2);
  REQUIRE(a.clean.size() == 8);
  REQUIRE(a.noise.size() == 2);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(testing::read_bytes(a.clean.entries[i].audio_path) == testing::read_bytes(b.clean.entries[i].audio_path));
    const AudioClip c = read_wav(a.clean.entries[i].audio_path);
    CHECK_NOTHROW(validate_clip(c));
    for (double v : c.samples)
      REQUIRE(std::abs(v) <= 1.0);
    REQUIRE(a.clean.entries[i].transcript);
    for (char ch : *a.clean.entries[i].transcript)
      CHECK((ch == ' ' || std::string(kToyAlphabet).find(ch) != std::string::npos));
  }
  for (const auto& e : a.noise.entries)
    CHECK_NOTHROW(validate_clip(read_wav(e.audio_path)));
  CHECK(error_code([&] { make_toy_corpus(dir / "c", 7, 0, 2); }) == "BadArgument");
}

TEST_CASE("pearson matches a long-double oracle") {
  const auto a = testing::random_signal(500, 1), b = testing::random_signal(500, 2);
  std::vector<double> c(500);
  for (std::size_t i = 0; i < 500; ++i)
    c[i] = a[i] + 0.5 * b[i];
  CHECK(pearson(a, c) == doctest::Approx(oracle_pearson(a, c)).epsilon(1e-12));
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("channel selection") {
  const auto s = testing::random_signal(400, 10);
  const auto noise = testing::random_signal(400, 11);

  SUBCASE("identical pair wins with lowest index") {
    MultiChannelRecording rec{{clip(s), clip(s), clip(noise)}, "r"};
    CHECK(select_reference_channel(rec) == 0);
  }

  SUBCASE("brute-force correlation oracle") {
    std::vector<double> e1(400), e2(400), neg(400);
    const auto n1 = testing::random_signal(400, 12, 0.05), n2 = testing::random_signal(400, 13, 0.05);
    for (std::size_t i = 0; i < 400; ++i) {
      e1[i] = s[i] + n1[i];
      e2[i] = s[i] + n2[i];
      neg[i] = -s[i];
    }
    MultiChannelRecording rec{{clip(s), clip(e1), clip(e2), clip(neg)}, "r"};
    std::size_t best = 0;
    double best_sum = -1e300;
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j)
          sum += oracle_pearson(rec.channels[i].samples, rec.channels[j].samples);
      if (sum > best_sum + 1e-12) {
        best_sum = sum;
        best = i;
      }
    }
    CHECK(select_reference_channel(rec) == best);

    // Positive affine scaling of channels does not move the argmax.
    MultiChannelRecording scaled = rec;
    for (std::size_t c = 0; c < 4; ++c)
      for (double& v : scaled.channels[c].samples)
        v = (0.5 + c) * v + 0.1 * c;
    CHECK(select_reference_channel(scaled) == best);
  }

  SUBCASE("top correlated") {
    MultiChannelRecording rec{{clip(s), clip(s), clip(std::vector<double>(s.rbegin(), s.rend())), clip(noise)}, "r"};
    std::vector<double> anti(400);
    for (std::size_t i = 0; i < 400; ++i)
      anti[i] = -s[i];
    rec.channels[2] = clip(anti);
    CHECK(select_top_correlated(rec, 0, 1) == std::vector<std::size_t>{1});
    const auto all = select_top_correlated(rec, 0, 3);
    CHECK(all == std::vector<std::size_t>{1, 3, 2});
  }

  SUBCASE("six-channel array vs brute-force ranking, k = 2") {
    std::vector<AudioClip> chans;
    for (int c = 0; c < 6; ++c) {
      const auto n = testing::random_signal(400, 100 + c, 0.1 * (c + 1));
      std::vector<double> x(400);
      for (std::size_t i = 0; i < 400; ++i)
        x[i] = s[i] + n[i];
      chans.push_back(clip(x));
    }
    MultiChannelRecording rec{chans, "array"};
    const std::size_t ref = select_reference_channel(rec);
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t j = 0; j < 6; ++j)
      if (j != ref)
        ranked.emplace_back(-oracle_pearson(rec.channels[ref].samples, rec.channels[j].samples), j);
    std::sort(ranked.begin(), ranked.end());
    CHECK(select_top_correlated(rec, ref, 2) == std::vector<std::size_t>{ranked[0].second, ranked[1].second});
  }

  SUBCASE("degenerate channels") {
    MultiChannelRecording rec{{clip({0.5}), clip({0.25})}, "tiny"};
    CHECK(error_code([&] { select_reference_channel(rec); }) == "DegenerateChannel");
  }
}
