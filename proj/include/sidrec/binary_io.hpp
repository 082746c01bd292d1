#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sidrec::io {

// Little-endian primitives for the binary artifact formats.
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_bytes(std::ostream& out, std::string_view bytes);

std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);
std::string read_bytes(std::istream& in, std::size_t count);
void expect_magic(std::istream& in, std::string_view magic, const std::string& what);

// Writes to a sibling temp file and renames it over `path`, so readers only
// ever observe a complete file.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

} // namespace sidrec::io
