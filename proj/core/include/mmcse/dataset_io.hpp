#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "mmcse/data.hpp"

namespace mmcse {

// Line-oriented dataset files. The first line names the format and version
// ("mmcse-sts v1", ...); every following line is one record with
// tab-separated fields. Token lists are space-separated ids; numbers are
// printed with 17 significant digits. Layouts are listed in docs/formats.md.
inline constexpr int kDatasetFormatVersion = 1;

void write_text_corpus(std::ostream& out, std::span<const LabeledSentence> corpus);
std::vector<LabeledSentence> read_text_corpus(std::istream& in);

void write_triplets(std::ostream& out, std::span<const TripletRecord> triplets);
std::vector<TripletRecord> read_triplets(std::istream& in);

void write_sts_pairs(std::ostream& out, const ScoredPairSet& pairs);
ScoredPairSet read_sts_pairs(std::istream& in);

void write_images(std::ostream& out, std::span<const LabeledImage> images);
std::vector<LabeledImage> read_images(std::istream& in);

void write_clips(std::ostream& out, std::span<const LabeledClip> clips);
std::vector<LabeledClip> read_clips(std::istream& in);

// File wrappers; FormatError when the file cannot be opened.
void save_text_corpus(const std::filesystem::path& path, std::span<const LabeledSentence> corpus);
std::vector<LabeledSentence> load_text_corpus(const std::filesystem::path& path);
void save_triplets(const std::filesystem::path& path, std::span<const TripletRecord> triplets);
std::vector<TripletRecord> load_triplets(const std::filesystem::path& path);
void save_sts_pairs(const std::filesystem::path& path, const ScoredPairSet& pairs);
ScoredPairSet load_sts_pairs(const std::filesystem::path& path);
void save_images(const std::filesystem::path& path, std::span<const LabeledImage> images);
std::vector<LabeledImage> load_images(const std::filesystem::path& path);
void save_clips(const std::filesystem::path& path, std::span<const LabeledClip> clips);
std::vector<LabeledClip> load_clips(const std::filesystem::path& path);

}  // namespace mmcse
