#include "appledet/data/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "appledet/common/error.hpp"

namespace appledet::data {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInput("netpbm: " + what + " at byte " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) fail(std::string(field) + " too large");
      ++pos_;
    }
    if (pos_ == start) {
      pos_ = start;
      fail(std::string("expected ") + field);
    }
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_netpbm(std::string_view bytes) {
  HeaderReader in(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    in.fail("magic must be P6 or P5");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  in.advance(2);
  const int width = in.number("width");
  const int height = in.number("height");
  const int maxval = in.number("maxval");
  if (width <= 0 || height <= 0) in.fail("zero image dimension");
  if (maxval != 255) in.fail("only maxval 255 is supported, got " + std::to_string(maxval));
  if (in.pos() >= in.size() || !std::isspace(static_cast<unsigned char>(bytes[in.pos()]))) {
    in.fail("missing whitespace after maxval");
  }
  in.advance(1);
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  const std::size_t have = in.size() - in.pos();
  if (have < need) {
    in.advance(have);
    in.fail("truncated pixel data: expected " + std::to_string(need) + " bytes, found " +
            std::to_string(have));
  }
  Image image{width, height, channels, {}};
  image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(in.pos()),
                      bytes.begin() + static_cast<std::ptrdiff_t>(in.pos() + need));
  return image;
}

std::string encode_netpbm(const Image& image) {
  require(image.channels == 3 || image.channels == 1, "netpbm: channels must be 1 or 3");
  require(image.pixels.size() ==
              static_cast<std::size_t>(image.width) * image.height * image.channels,
          "netpbm: pixel buffer does not match dimensions");
  std::string out = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) +
                    " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InvalidInput("netpbm: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << file.rdbuf();
  try {
    return decode_netpbm(buffer.str());
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InvalidInput("netpbm: cannot write " + path.string());
  const std::string bytes = encode_netpbm(image);
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace appledet::data
