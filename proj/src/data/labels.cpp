#include "appledet/data/labels.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "appledet/common/error.hpp"

namespace appledet::data {

namespace {

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double to_double(std::string_view s, int line_no, const char* field) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw InvalidInput("labels line " + std::to_string(line_no) + ": " + field +
                       " is not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<boxloss::Box> parse_labels(std::string_view text) {
  std::vector<boxloss::Box> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto f = fields(line);
    if (f.empty()) continue;
    const auto err = [&](const std::string& what) {
      return InvalidInput("labels line " + std::to_string(line_no) + ": " + what);
    };
    if (f.size() != 5) throw err("expected 5 fields, got " + std::to_string(f.size()));
    int cls = -1;
    const auto [end, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), cls);
    if (ec != std::errc{} || end != f[0].data() + f[0].size()) {
      throw err("class is not an integer: '" + std::string(f[0]) + "'");
    }
    if (cls != boxloss::kApple && cls != boxloss::kBlock) {
      throw err("unknown class " + std::to_string(cls) + " (expected 0 apple or 1 block)");
    }
    boxloss::Box b{to_double(f[1], line_no, "cx"), to_double(f[2], line_no, "cy"),
                   to_double(f[3], line_no, "w"), to_double(f[4], line_no, "h"), cls};
    for (double v : {b.cx, b.cy, b.w, b.h}) {
      if (!(v >= 0.0 && v <= 1.0)) throw err("coordinate outside [0, 1]");
    }
    if (!b.valid()) throw err("box has zero width or height");
    out.push_back(b);
  }
  return out;
}

std::string format_labels(const std::vector<boxloss::Box>& boxes) {
  std::string out;
  char line[96];
  for (const auto& b : boxes) {
    std::snprintf(line, sizeof line, "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w,
                  b.h);
    out += line;
  }
  return out;
}

std::vector<boxloss::Box> read_labels(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw InvalidInput("labels: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << file.rdbuf();
  try {
    return parse_labels(buffer.str());
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_labels(const std::filesystem::path& path, const std::vector<boxloss::Box>& boxes) {
  std::ofstream file(path);
  if (!file) throw InvalidInput("labels: cannot write " + path.string());
  file << format_labels(boxes);
}

boxloss::Box to_pixels(const boxloss::Box& b, int width, int height) {
  return b.scaled(width, height);
}

boxloss::Box to_normalized(const boxloss::Box& b, int width, int height) {
  return b.scaled(1.0 / width, 1.0 / height);
}

}  // namespace appledet::data
