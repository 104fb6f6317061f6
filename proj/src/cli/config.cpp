#include "appledet/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "appledet/common/error.hpp"

namespace appledet::cli {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw InvalidInput("config: " + key + " expects a number, got '" + s + "'");
  }
  return v;
}

long long to_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw InvalidInput("config: " + key + " expects an integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s, const std::string& key) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw InvalidInput("config: " + key + " expects true or false, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string strides_text(const std::vector<int>& strides) {
  std::string out;
  for (std::size_t i = 0; i < strides.size(); ++i) out += (i ? "," : "") + std::to_string(strides[i]);
  return out;
}

std::string anchors_text(const std::vector<std::vector<blocks::AnchorBox>>& anchors) {
  std::string out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (i) out += "; ";
    for (std::size_t j = 0; j < anchors[i].size(); ++j) {
      out += (j ? " " : "") + fmt(anchors[i][j].w) + "," + fmt(anchors[i][j].h);
    }
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define NUM_FIELD(sec, name, member)                                              \
  Field{sec, name, [](const RunConfig& c) { return fmt(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = to_double(v, name); }}
#define INT_FIELD(sec, name, member)                                                   \
  Field{sec, name, [](const RunConfig& c) { return std::to_string(c.member); },        \
        [](RunConfig& c, const std::string& v) {                                       \
          c.member = static_cast<decltype(c.member)>(to_int(v, name));                 \
        }}
#define BOOL_FIELD(sec, name, member)                                                  \
  Field{sec, name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.member = to_bool(v, name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"network", "variant", [](const RunConfig& c) { return blocks::to_string(c.network.variant); },
            [](RunConfig& c, const std::string& v) {
              c.network = blocks::NetworkSpec::make(blocks::parse_variant(v),
                                                    c.network.depth_multiple,
                                                    c.network.width_multiple);
            }},
      NUM_FIELD("network", "depth_multiple", network.depth_multiple),
      NUM_FIELD("network", "width_multiple", network.width_multiple),
      INT_FIELD("network", "num_classes", network.num_classes),
      Field{"network", "strides", [](const RunConfig& c) { return strides_text(c.network.strides); },
            [](RunConfig& c, const std::string& v) {
              std::vector<int> strides;
              for (const auto& s : split(v, ',')) strides.push_back(static_cast<int>(to_int(s, "strides")));
              c.network.strides = strides;
              c.network.anchors.clear();
              for (int s : strides) c.network.anchors.push_back(blocks::default_anchors(s));
            }},
      Field{"network", "anchors", [](const RunConfig& c) { return anchors_text(c.network.anchors); },
            [](RunConfig& c, const std::string& v) {
              std::vector<std::vector<blocks::AnchorBox>> anchors;
              for (const auto& group : split(v, ';')) {
                std::vector<blocks::AnchorBox> trio;
                for (const auto& pair : split(group, ' ')) {
                  const auto wh = split(pair, ',');
                  if (wh.size() != 2) throw InvalidInput("config: anchors expects 'w,h' pairs, got '" + pair + "'");
                  trio.push_back({to_double(wh[0], "anchors"), to_double(wh[1], "anchors")});
                }
                anchors.push_back(trio);
              }
              c.network.anchors = anchors;
            }},
      NUM_FIELD("optimizer", "learning_rate", learning_rate),
      NUM_FIELD("optimizer", "momentum", momentum),
      NUM_FIELD("optimizer", "weight_decay", weight_decay),
      Field{"optimizer", "lr_schedule", [](const RunConfig& c) { return c.lr_schedule; },
            [](RunConfig& c, const std::string& v) { c.lr_schedule = v; }},
      Field{"optimizer", "loss_scale", [](const RunConfig& c) { return c.loss_scale; },
            [](RunConfig& c, const std::string& v) { c.loss_scale = v; }},
      NUM_FIELD("loss", "box", coefficients.box),
      NUM_FIELD("loss", "cls", coefficients.cls),
      NUM_FIELD("loss", "obj", coefficients.obj),
      Field{"loss", "ciou_form", [](const RunConfig& c) { return to_string(c.ciou_form); },
            [](RunConfig& c, const std::string& v) { c.ciou_form = parse_ciou_form(v); }},
      BOOL_FIELD("loss", "iou_scaled_objectness", iou_scaled_objectness),
      Field{"loss", "objectness_balance",
            [](const RunConfig& c) {
              if (c.objectness_balance.empty()) return std::string("auto");
              std::string out;
              for (std::size_t i = 0; i < c.objectness_balance.size(); ++i) {
                out += (i ? "," : "") + fmt(c.objectness_balance[i]);
              }
              return out;
            },
            [](RunConfig& c, const std::string& v) {
              c.objectness_balance.clear();
              if (v == "auto") return;
              for (const auto& s : split(v, ',')) c.objectness_balance.push_back(to_double(s, "objectness_balance"));
            }},
      INT_FIELD("training", "epochs", epochs),
      INT_FIELD("training", "batch_size", batch_size),
      INT_FIELD("training", "image_size", image_size),
      INT_FIELD("training", "seed", seed),
      BOOL_FIELD("training", "online_augment", online_augment),
      NUM_FIELD("eval", "conf_threshold", conf_threshold),
      NUM_FIELD("eval", "nms_iou", nms_iou),
      NUM_FIELD("eval", "match_iou", match_iou),
      NUM_FIELD("eval", "conf_floor", conf_floor),
      INT_FIELD("data", "scenes", scenes),
      NUM_FIELD("data", "train_fraction", train_fraction),
      NUM_FIELD("data", "occluder_density", occluder_density),
      INT_FIELD("data", "min_objects", min_objects),
      INT_FIELD("data", "max_objects", max_objects),
  };
  return table;
}

#undef NUM_FIELD
#undef INT_FIELD
#undef BOOL_FIELD

const Field& find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (section == f.section && key == f.key) return f;
  }
  throw InvalidInput("config: unknown key '" + section + "." + key + "'");
}

}  // namespace

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::desk;
  if (name == "full") return Profile::full;
  throw InvalidInput("unknown profile '" + name + "' (expected desk or full)");
}

std::string to_string(boxloss::CiouForm form) {
  return form == boxloss::CiouForm::squared ? "squared" : "unsquared";
}

boxloss::CiouForm parse_ciou_form(const std::string& text) {
  if (text == "squared") return boxloss::CiouForm::squared;
  if (text == "unsquared") return boxloss::CiouForm::unsquared;
  throw InvalidInput("config: ciou_form must be squared or unsquared, got '" + text + "'");
}

RunConfig RunConfig::defaults(Profile profile) {
  RunConfig c;
  if (profile == Profile::full) {
    c.network = blocks::NetworkSpec::make(blocks::Variant::yolov5s_bc, 0.33, 0.5);
    c.epochs = 200;
    c.batch_size = 16;
    c.image_size = 640;
  }
  return c;
}

void RunConfig::validate() const {
  network.validate();
  require(learning_rate >= 0.0, "config: learning_rate must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "config: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "config: weight_decay must be >= 0");
  require(lr_schedule == "constant" || lr_schedule == "cosine",
          "config: lr_schedule must be constant or cosine");
  require(loss_scale == "batch" || loss_scale == "none", "config: loss_scale must be batch or none");
  require(coefficients.box >= 0.0 && coefficients.cls >= 0.0 && coefficients.obj >= 0.0,
          "config: loss coefficients must be >= 0");
  require(objectness_balance.empty() || objectness_balance.size() == network.strides.size(),
          "config: objectness_balance needs one weight per stride");
  for (double b : objectness_balance) require(b >= 0.0, "config: objectness_balance must be >= 0");
  require(epochs >= 1, "config: epochs must be >= 1");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(image_size > 0 && image_size % network.max_stride() == 0,
          "config: image_size must be a positive multiple of " +
              std::to_string(network.max_stride()));
  for (double t : {conf_threshold, nms_iou, match_iou, conf_floor}) {
    require(t >= 0.0 && t <= 1.0, "config: eval thresholds must lie in [0, 1]");
  }
  require(scenes >= 1, "config: scenes must be >= 1");
  require(train_fraction > 0.0 && train_fraction <= 1.0, "config: train_fraction must lie in (0, 1]");
  require(occluder_density >= 0.0, "config: occluder_density must be >= 0");
  require(min_objects >= 0 && max_objects >= min_objects, "config: invalid object count range");
}

std::string RunConfig::serialize() const {
  std::string out, section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::network_section() const {
  std::string out = "[network]\n";
  for (const auto& f : fields()) {
    if (std::string_view(f.section) == "network") out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidInput(where() + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput(where() + "expected 'key = value'");
    if (section.empty()) throw InvalidInput(where() + "key outside of a section");
    try {
      find_field(section, trim(line.substr(0, eq))).set(c, trim(line.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw InvalidInput(where() + e.what());
    }
  }
  return c;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw InvalidInput("override must look like section.key=value, got '" + assignment + "'");
  }
  find_field(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)))
      .set(*this, trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("config: cannot write " + path.string());
  out << serialize();
}

}  // namespace appledet::cli
