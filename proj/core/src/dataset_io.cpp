#include "mmcse/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "mmcse/error.hpp"

namespace mmcse {

namespace {

std::string header(std::string_view kind) { return "mmcse-" + std::string(kind) + " v" + std::to_string(kDatasetFormatVersion); }

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string_view kind) : in_(in), kind_(kind) {
    std::string first;
    if (!std::getline(in_, first)) throw FormatError("empty " + kind_ + " file");
    const std::string prefix = "mmcse-" + kind_ + " v";
    if (first.rfind(prefix, 0) != 0) {
      throw FormatError("expected a '" + prefix + "N' header, found '" + first.substr(0, 40) + "'");
    }
    const auto fields = split(std::string_view(first).substr(prefix.size()), '\t');
    int version = 0;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), version);
    if (ec != std::errc() || p != fields[0].data() + fields[0].size()) throw FormatError("malformed version in header");
    if (version != kDatasetFormatVersion) {
      throw FormatError("unsupported " + kind_ + " format version " + std::to_string(version) + " (expected " +
                        std::to_string(kDatasetFormatVersion) + ")");
    }
    for (std::size_t i = 1; i < fields.size(); ++i) header_fields_.emplace_back(fields[i]);
    line_no_ = 1;
  }

  const std::vector<std::string>& header_fields() const { return header_fields_; }

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(kind_ + " line " + std::to_string(line_no_) + ": " + what);
  }

  std::vector<std::string_view> fields(const std::string& line, std::size_t expected) const {
    auto f = split(line, '\t');
    if (f.size() != expected) {
      fail("expected " + std::to_string(expected) + " tab-separated fields, found " + std::to_string(f.size()));
    }
    return f;
  }

  template <typename T>
  T number(std::string_view s) const {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return v;
  }

  Sentence tokens(std::string_view s) const {
    Sentence out;
    if (s.empty()) return out;
    for (auto part : split(s, ' ')) out.push_back(number<Token>(part));
    return out;
  }

  std::vector<double> doubles(std::string_view s, std::size_t expected) const {
    std::vector<double> out;
    out.reserve(expected);
    if (!s.empty()) {
      for (auto part : split(s, ' ')) out.push_back(number<double>(part));
    }
    if (out.size() != expected) {
      fail("expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()));
    }
    return out;
  }

 private:
  std::istream& in_;
  std::string kind_;
  std::vector<std::string> header_fields_;
  std::size_t line_no_ = 0;
};

std::string join_tokens(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_values(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_double(values[i]);
  }
}

void check_stream(std::ostream& out) {
  if (!out) throw FormatError("failed writing dataset");
}

template <typename F>
auto with_input(const std::filesystem::path& path, F read) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read(in);
}

template <typename F>
void with_output(const std::filesystem::path& path, F write) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write(out);
}

}  // namespace

void write_text_corpus(std::ostream& out, std::span<const LabeledSentence> corpus) {
  out << header("text") << '\n';
  for (const auto& s : corpus) out << s.cluster << '\t' << join_tokens(s.tokens) << '\n';
  check_stream(out);
}

std::vector<LabeledSentence> read_text_corpus(std::istream& in) {
  LineReader r(in, "text");
  std::vector<LabeledSentence> out;
  std::string line;
  while (r.next(line)) {
    auto f = r.fields(line, 2);
    out.push_back({r.tokens(f[1]), r.number<int>(f[0])});
  }
  return out;
}

void write_triplets(std::ostream& out, std::span<const TripletRecord> triplets) {
  out << header("triplets") << '\n';
  for (const auto& t : triplets) {
    out << join_tokens(t.src) << '\t' << join_tokens(t.pos) << '\t' << join_tokens(t.neg) << '\n';
  }
  check_stream(out);
}

std::vector<TripletRecord> read_triplets(std::istream& in) {
  LineReader r(in, "triplets");
  std::vector<TripletRecord> out;
  std::string line;
  while (r.next(line)) {
    auto f = r.fields(line, 3);
    out.push_back({r.tokens(f[0]), r.tokens(f[1]), r.tokens(f[2])});
  }
  return out;
}

void write_sts_pairs(std::ostream& out, const ScoredPairSet& pairs) {
  out << header("sts") << '\n';
  for (const auto& p : pairs) out << format_double(p.gold) << '\t' << join_tokens(p.a) << '\t' << join_tokens(p.b) << '\n';
  check_stream(out);
}

ScoredPairSet read_sts_pairs(std::istream& in) {
  LineReader r(in, "sts");
  ScoredPairSet out;
  std::string line;
  while (r.next(line)) {
    auto f = r.fields(line, 3);
    out.push_back({r.tokens(f[1]), r.tokens(f[2]), r.number<double>(f[0])});
  }
  return out;
}

void write_images(std::ostream& out, std::span<const LabeledImage> images) {
  const Shape shape = images.empty() ? Shape{3, 0, 0} : images.front().pixels.shape();
  out << header("images") << '\t' << shape.at(0) << ' ' << shape.at(1) << ' ' << shape.at(2) << '\n';
  for (const auto& img : images) {
    if (img.pixels.shape() != shape) throw DimensionError("images differ in shape");
    out << img.label << '\t';
    write_values(out, img.pixels.values());
    out << '\n';
  }
  check_stream(out);
}

namespace {

Shape header_shape(const LineReader& r, std::size_t rank) {
  if (r.header_fields().size() != 1) throw FormatError("header is missing the record shape");
  const auto dims = split(r.header_fields()[0], ' ');
  if (dims.size() != rank) throw FormatError("header shape has the wrong rank");
  Shape shape;
  for (auto d : dims) shape.push_back(r.number<std::size_t>(d));
  return shape;
}

}  // namespace

std::vector<LabeledImage> read_images(std::istream& in) {
  LineReader r(in, "images");
  const Shape shape = header_shape(r, 3);
  std::vector<LabeledImage> out;
  std::string line;
  while (r.next(line)) {
    auto f = r.fields(line, 2);
    out.push_back({Tensor(shape, r.doubles(f[1], shape_numel(shape))), r.number<int>(f[0])});
  }
  return out;
}

void write_clips(std::ostream& out, std::span<const LabeledClip> clips) {
  const Shape shape = clips.empty() ? Shape{0, 0} : clips.front().frames.shape();
  out << header("audio") << '\t' << shape.at(0) << ' ' << shape.at(1) << '\n';
  for (const auto& clip : clips) {
    if (clip.frames.shape() != shape) throw DimensionError("clips differ in shape");
    out << clip.label << '\t';
    write_values(out, clip.frames.values());
    out << '\n';
  }
  check_stream(out);
}

std::vector<LabeledClip> read_clips(std::istream& in) {
  LineReader r(in, "audio");
  const Shape shape = header_shape(r, 2);
  std::vector<LabeledClip> out;
  std::string line;
  while (r.next(line)) {
    auto f = r.fields(line, 2);
    out.push_back({Tensor(shape, r.doubles(f[1], shape_numel(shape))), r.number<int>(f[0])});
  }
  return out;
}

void save_text_corpus(const std::filesystem::path& path, std::span<const LabeledSentence> corpus) {
  with_output(path, [&](std::ostream& o) { write_text_corpus(o, corpus); });
}
std::vector<LabeledSentence> load_text_corpus(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& i) { return read_text_corpus(i); });
}
void save_triplets(const std::filesystem::path& path, std::span<const TripletRecord> triplets) {
  with_output(path, [&](std::ostream& o) { write_triplets(o, triplets); });
}
std::vector<TripletRecord> load_triplets(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& i) { return read_triplets(i); });
}
void save_sts_pairs(const std::filesystem::path& path, const ScoredPairSet& pairs) {
  with_output(path, [&](std::ostream& o) { write_sts_pairs(o, pairs); });
}
ScoredPairSet load_sts_pairs(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& i) { return read_sts_pairs(i); });
}
void save_images(const std::filesystem::path& path, std::span<const LabeledImage> images) {
  with_output(path, [&](std::ostream& o) { write_images(o, images); });
}
std::vector<LabeledImage> load_images(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& i) { return read_images(i); });
}
void save_clips(const std::filesystem::path& path, std::span<const LabeledClip> clips) {
  with_output(path, [&](std::ostream& o) { write_clips(o, clips); });
}
std::vector<LabeledClip> load_clips(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& i) { return read_clips(i); });
}

}  // namespace mmcse
