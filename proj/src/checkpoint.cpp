#include "siamret/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "siamret/error.hpp"

namespace siamret {

namespace {

constexpr char kMagic[4] = {'S', 'R', 'C', 'K'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : in_(bytes), source_(std::move(source)) {}

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) {
    if (n > in_.size() - pos_) fail(ErrorCode::parse, source_ + ": checkpoint payload is truncated");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
  std::string source_;
};

void write_net(Writer& w, const Net& net) {
  const auto& s = net.spec();
  w.u32(s.kind == NetKind::bag ? 0 : 1);
  for (auto v : {s.input_dim, s.n_hu, s.n_emb, s.word_dim, s.kernel_count, s.window}) w.u64(v);
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const auto& t : net.params()) {
    w.str(t.name);
    w.u64(t.rows);
    w.u64(t.cols);
    for (double v : t.data) w.f64(v);
  }
}

Net read_net(Reader& r, const std::string& source) {
  NetSpec s;
  const auto kind = r.u32();
  if (kind > 1) fail(ErrorCode::parse, source + ": unknown net kind");
  s.kind = kind == 0 ? NetKind::bag : NetKind::sequence;
  s.input_dim = r.u64();
  s.n_hu = r.u64();
  s.n_emb = r.u64();
  s.word_dim = r.u64();
  s.kernel_count = r.u64();
  s.window = r.u64();
  Net net(s);
  const auto count = r.u32();
  if (count != net.params().size()) fail(ErrorCode::parse, source + ": parameter count does not match net spec");
  for (auto& t : net.params()) {
    const auto name = r.str();
    const auto rows = r.u64(), cols = r.u64();
    if (name != t.name || rows != t.rows || cols != t.cols)
      fail(ErrorCode::parse, source + ": tensor '" + name + "' does not match net spec");
    for (auto& v : t.data) v = r.f64();
  }
  return net;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(ckpt.format_version);
  w.str(ckpt.settings.to_key_values());
  w.str(ckpt.vocabulary.serialize());
  write_net(w, ckpt.model.text);
  write_net(w, ckpt.model.visual);
  w.u64(ckpt.history.epochs.size());
  for (const auto& e : ckpt.history.epochs) {
    w.u64(e.epoch);
    w.f64(e.lr);
    w.f64(e.train_error);
    w.f64(e.val_error);
  }
  w.u64(ckpt.history.best_epoch);
  const auto crc = crc32_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::string_view bytes, std::string_view source_view) {
  const std::string source(source_view);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorCode::parse, source + ": not a checkpoint file");
  Reader header(bytes.substr(4, 4), source);
  const auto version = header.u32();
  if (version != kCheckpointVersion)
    fail(ErrorCode::version, source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4), source);
  if (tail.u32() != crc32_of(body)) fail(ErrorCode::checksum, source + ": checksum mismatch (truncated or corrupt)");

  Reader r(body.substr(8), source);
  Checkpoint ckpt;
  ckpt.format_version = version;
  {
    std::istringstream cfg(r.str());
    ckpt.settings = RunSettings::parse(cfg, source);
  }
  {
    std::istringstream vocab(r.str());
    ckpt.vocabulary = Vocabulary::parse(vocab, source);
  }
  ckpt.model.text = read_net(r, source);
  ckpt.model.visual = read_net(r, source);
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    EpochRecord e;
    e.epoch = r.u64();
    e.lr = r.f64();
    e.train_error = r.f64();
    e.val_error = r.f64();
    ckpt.history.epochs.push_back(e);
  }
  ckpt.history.best_epoch = r.u64();
  if (!r.done()) fail(ErrorCode::parse, source + ": trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  write_file(tmp, encode_checkpoint(ckpt));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "cannot move checkpoint into place at '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

}  // namespace siamret
