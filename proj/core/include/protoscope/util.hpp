#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace protoscope {

// FNV-1a over raw bytes; used for dataset/config fingerprints in provenance
// records and run manifests.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s);
std::uint64_t fnv1a(std::span<const double> values);

// Writes content to `path` atomically (temp file in the same directory +
// rename). No partial file is ever visible at `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// Runs fn(i) for i in [0, n). With jobs <= 1 runs inline; otherwise fans out
// over a fixed thread pool. Callers must make fn(i) independent of execution
// order (all randomness through per-i RngStreams), so results match the
// serial run exactly.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// Canonical float formatting for all CSV/manifest output: shortest
// round-trippable representation, so identical values always serialize to
// identical bytes.
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace protoscope
