#include "data/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.h"

namespace rssl {

  namespace {
    void put_u32(std::ostream& os, std::uint32_t v) {
      const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
      os.write(reinterpret_cast<const char*>(b), 4);
    }

    void put_u16(std::ostream& os, std::uint16_t v) {
      const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }

    std::uint32_t get_u32(const unsigned char* p) {
      return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
           | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint16_t get_u16(const unsigned char* p) {
      return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
  }

  void validate_clip(const AudioClip& clip) {
    if (clip.samples.empty())
      fail(ErrorKind::Data, "InvalidClip", "clip '" + clip.id + "' is empty");
    if (clip.sample_rate <= 0)
      fail(ErrorKind::Data, "InvalidClip", "clip '" + clip.id + "' has non-positive sample rate");
    for (double s : clip.samples)
      if (!std::isfinite(s))
        fail(ErrorKind::Data, "InvalidClip", "clip '" + clip.id + "' has non-finite samples");
  }

  double mean_power(const std::vector<double>& samples) {
    if (samples.empty())
      return 0.0;
    double acc = 0.0;
    for (double s : samples)
      acc += s * s;
    return acc / static_cast<double>(samples.size());
  }

  void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
      fail(ErrorKind::Io, "IoError", "cannot open " + path.string() + " for writing");
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1);
    put_u16(os, 1);
    put_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    put_u16(os, 2);
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (double s : clip.samples) {
      const double scaled = std::round(s * 32768.0);
      const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(os, static_cast<std::uint16_t>(q));
    }
    if (!os)
      fail(ErrorKind::Io, "IoError", "write failed for " + path.string());
  }

  AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
      fail(ErrorKind::Io, "IoError", "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
      fail(ErrorKind::Data, "BadWav", path.string() + " is not a RIFF/WAVE file");

    AudioClip clip;
    clip.id = path.stem().string();
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
      const unsigned char* chunk = bytes.data() + pos;
      const std::uint32_t len = get_u32(chunk + 4);
      const std::size_t body = pos + 8;
      if (body + len > bytes.size())
        fail(ErrorKind::Data, "BadWav", path.string() + ": truncated chunk");
      if (std::memcmp(chunk, "fmt ", 4) == 0) {
        if (len < 16)
          fail(ErrorKind::Data, "BadWav", path.string() + ": short fmt chunk");
        const std::uint16_t format = get_u16(bytes.data() + body);
        const std::uint16_t channels = get_u16(bytes.data() + body + 2);
        const std::uint16_t bits = get_u16(bytes.data() + body + 14);
        if (format != 1 || channels != 1 || bits != 16)
          fail(ErrorKind::Data, "BadWav", path.string() + ": only mono 16-bit PCM is supported");
        clip.sample_rate = static_cast<int>(get_u32(bytes.data() + body + 4));
        have_fmt = true;
      } else if (std::memcmp(chunk, "data", 4) == 0) {
        if (!have_fmt)
          fail(ErrorKind::Data, "BadWav", path.string() + ": data before fmt");
        clip.samples.resize(len / 2);
        for (std::size_t i = 0; i < clip.samples.size(); ++i) {
          const auto q = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
          clip.samples[i] = static_cast<double>(q) / 32768.0;
        }
        return clip;
      }
      pos = body + len + (len & 1);
    }
    fail(ErrorKind::Data, "BadWav", path.string() + ": no data chunk");
  }

}
