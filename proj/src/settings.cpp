#include "siamret/settings.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "siamret/error.hpp"

namespace siamret {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorCode::config, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  std::string buf(v);
  char* end = nullptr;
  const double out = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || !std::isfinite(out))
    fail(ErrorCode::config, "'" + std::string(key) + "' expects a real number, got '" + buf + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::config, "'" + std::string(key) + "' expects true or false");
}

// Shortest text that reads back to the same double.
std::string real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) fail(ErrorCode::config, e.what());
    throw;
  }
}

}  // namespace

std::string_view text_model_name(NetKind kind) { return kind == NetKind::bag ? "mlp" : "sse"; }

void RunSettings::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "margin") train.margin = to_real(key, value);
  else if (key == "lr") train.lr0 = to_real(key, value);
  else if (key == "epochs") train.max_epochs = to_size(key, value);
  else if (key == "methodology") train.methodology = as_config_error([&] { return parse_methodology(value); });
  else if (key == "seed") train.seed = to_size(key, value);
  else if (key == "weighting") train.weighting = as_config_error([&] { return parse_weighting(value); });
  else if (key == "val_pairs") train.val_pairs_per_epoch = to_size(key, value);
  else if (key == "text_model") {
    if (value == "mlp") text_kind = NetKind::bag;
    else if (value == "sse") text_kind = NetKind::sequence;
    else fail(ErrorCode::config, "text_model must be mlp or sse");
  } else if (key == "n_hu") n_hu = to_size(key, value);
  else if (key == "n_emb") n_emb = to_size(key, value);
  else if (key == "visual_n_hu") visual_n_hu = to_size(key, value);
  else if (key == "word_dim") word_dim = to_size(key, value);
  else if (key == "kernels") kernels = to_size(key, value);
  else if (key == "window") window = to_size(key, value);
  else if (key == "embeddings") embeddings = std::string(value);
  else if (key == "strict") strict = to_bool(key, value);
  else if (key == "nonlinearity") {
    if (value != "relu") fail(ErrorCode::config, "only relu is supported");
  } else if (key == "lr_decay") {
    if (value != "linear") fail(ErrorCode::config, "only linear lr decay is supported");
  } else if (key == "lr_floor_factor") {
    if (to_real(key, value) != kLrFloorFactor) fail(ErrorCode::config, "lr_floor_factor is fixed at 0.01");
  } else if (key == "lr_decay_epochs") {
    if (to_size(key, value) != kLrDecayEpochs) fail(ErrorCode::config, "lr_decay_epochs is fixed at 100");
  } else if (key.starts_with("input.") || key == "mode" || key == "feature_dim" || key == "vocab_size" ||
             key == "tool_version") {
    // manifest annotations
  } else {
    fail(ErrorCode::config, "unknown config key '" + std::string(key) + "'");
  }
}

void RunSettings::validate() const {
  as_config_error([&] {
    train.validate();
    return 0;
  });
  if (n_emb == 0) fail(ErrorCode::config, "n_emb must be positive");
  if (text_kind == NetKind::sequence) {
    if (n_hu != 0) fail(ErrorCode::config, "the sse text model has no hidden layer; set n_hu = 0");
    if (word_dim == 0 || kernels == 0 || window == 0) fail(ErrorCode::config, "word_dim, kernels and window must be positive");
  }
}

NetSpec RunSettings::text_spec(std::size_t vocab_size) const {
  NetSpec s;
  s.kind = text_kind;
  s.input_dim = vocab_size;
  s.n_emb = n_emb;
  if (text_kind == NetKind::bag) {
    s.n_hu = n_hu;
  } else {
    s.word_dim = word_dim;
    s.kernel_count = kernels;
    s.window = window;
  }
  return s;
}

NetSpec RunSettings::visual_spec(std::size_t feature_dim) const {
  NetSpec s;
  s.kind = NetKind::bag;
  s.input_dim = feature_dim;
  s.n_hu = visual_n_hu;
  s.n_emb = n_emb;
  return s;
}

std::string RunSettings::to_key_values() const {
  std::ostringstream out;
  out << "margin=" << real(train.margin) << '\n'
      << "lr=" << real(train.lr0) << '\n'
      << "lr_decay=linear\n"
      << "lr_floor_factor=" << real(kLrFloorFactor) << '\n'
      << "lr_decay_epochs=" << kLrDecayEpochs << '\n'
      << "nonlinearity=relu\n"
      << "epochs=" << train.max_epochs << '\n'
      << "methodology=" << to_string(train.methodology) << '\n'
      << "seed=" << train.seed << '\n'
      << "weighting=" << to_string(train.weighting) << '\n'
      << "val_pairs=" << train.val_pairs_per_epoch << '\n'
      << "text_model=" << text_model_name(text_kind) << '\n'
      << "n_hu=" << n_hu << '\n'
      << "n_emb=" << n_emb << '\n'
      << "visual_n_hu=" << visual_n_hu << '\n'
      << "word_dim=" << word_dim << '\n'
      << "kernels=" << kernels << '\n'
      << "window=" << window << '\n'
      << "embeddings=" << embeddings << '\n'
      << "strict=" << (strict ? "true" : "false") << '\n';
  return out.str();
}

std::string RunSettings::get(std::string_view key) const {
  std::istringstream in(to_key_values());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (std::string_view(line).substr(0, eq) == key) return line.substr(eq + 1);
  }
  fail(ErrorCode::not_found, "unknown setting '" + std::string(key) + "'");
}

RunSettings RunSettings::parse(std::istream& in, std::string_view source) {
  RunSettings s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::config, std::string(source) + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      s.set(trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.code(), std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return s;
}

RunSettings RunSettings::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config '" + path + "'");
  return parse(in, path);
}

}  // namespace siamret
