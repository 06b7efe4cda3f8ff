#include "mmcse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "mmcse/error.hpp"

namespace mmcse {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'C', 'S', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kMaxNameLength = 1u << 16;
constexpr std::uint32_t kMaxConfigLength = 1u << 20;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

void put_bytes(std::ostream& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::string get_bytes(std::istream& in, std::uint32_t limit, const char* what) {
  const std::uint32_t n = get_u32(in, what);
  if (n > limit) throw FormatError(std::string("checkpoint field too long: ") + what);
  std::string s(n, '\0');
  read_exact(in, s.data(), n, what);
  return s;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string encoder_config_text(const EncoderConfig& c) {
  std::ostringstream os;
  os << "num_layers=" << c.num_layers << '\n'
     << "num_heads=" << c.num_heads << '\n'
     << "hidden_dim=" << c.hidden_dim << '\n'
     << "ff_dim=" << c.ff_dim << '\n'
     << "dropout_rate=" << format_double(c.dropout_rate) << '\n'
     << "max_seq_len=" << c.max_seq_len << '\n'
     << "vocab_size=" << c.vocab_size << '\n'
     << "layer_norm_eps=" << format_double(c.layer_norm_eps) << '\n'
     << "image_height=" << c.image_height << '\n'
     << "image_width=" << c.image_width << '\n'
     << "patch_grid_rows=" << c.patch_grid.rows << '\n'
     << "patch_grid_cols=" << c.patch_grid.cols << '\n'
     << "spectrogram_frames=" << c.spectrogram_frames << '\n'
     << "spectrogram_bins=" << c.spectrogram_bins << '\n'
     << "audio_block_frames=" << c.audio_block.frames << '\n'
     << "audio_block_bins=" << c.audio_block.bins << '\n';
  return os.str();
}

EncoderConfig parse_encoder_config_text(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed encoder config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("encoder config is missing '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto size_of = [&](const char* key) -> std::size_t {
    const std::string v = take(key);
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw FormatError(std::string("bad integer for '") + key + "': " + v);
    return static_cast<std::size_t>(out);
  };
  auto double_of = [&](const char* key) -> double {
    const std::string v = take(key);
    std::size_t pos = 0;
    double out = 0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw FormatError(std::string("bad number for '") + key + "': " + v);
    return out;
  };

  EncoderConfig c;
  c.num_layers = size_of("num_layers");
  c.num_heads = size_of("num_heads");
  c.hidden_dim = size_of("hidden_dim");
  c.ff_dim = size_of("ff_dim");
  c.dropout_rate = double_of("dropout_rate");
  c.max_seq_len = size_of("max_seq_len");
  c.vocab_size = size_of("vocab_size");
  c.layer_norm_eps = double_of("layer_norm_eps");
  c.image_height = size_of("image_height");
  c.image_width = size_of("image_width");
  c.patch_grid.rows = size_of("patch_grid_rows");
  c.patch_grid.cols = size_of("patch_grid_cols");
  c.spectrogram_frames = size_of("spectrogram_frames");
  c.spectrogram_bins = size_of("spectrogram_bins");
  c.audio_block.frames = size_of("audio_block_frames");
  c.audio_block.bins = size_of("audio_block_bins");
  if (!kv.empty()) throw FormatError("unknown encoder config key '" + kv.begin()->first + "'");
  return c;
}

void write_checkpoint(std::ostream& out, const Encoder& model) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_bytes(out, encoder_config_text(model.config()));
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_bytes(out, p->name());
    const Tensor& v = p->value();
    put_u32(out, static_cast<std::uint32_t>(v.rank()));
    for (auto d : v.shape()) put_u64(out, d);
    for (double x : v.values()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

Encoder read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  read_exact(in, magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const EncoderConfig config = parse_encoder_config_text(get_bytes(in, kMaxConfigLength, "config"));
  Encoder model(config, Seed(0));
  const std::uint32_t count = get_u32(in, "parameter count");
  if (count != model.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters; the encoder config implies " +
                      std::to_string(model.parameters().size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_bytes(in, kMaxNameLength, "parameter name");
    if (!model.has_parameter(name)) throw FormatError("unknown parameter '" + name + "' in checkpoint");
    if (!seen.insert(name).second) throw FormatError("parameter '" + name + "' appears twice in checkpoint");
    Tensor& value = model.parameter(name).value();
    const std::uint32_t rank = get_u32(in, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_u64(in, "dims");
    if (shape != value.shape()) {
      throw FormatError("shape " + shape_string(shape) + " of '" + name + "' does not match expected " +
                        shape_string(value.shape()));
    }
    for (auto& x : value.values()) x = std::bit_cast<double>(get_u64(in, "values"));
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Encoder& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, model);
}

Encoder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace mmcse
