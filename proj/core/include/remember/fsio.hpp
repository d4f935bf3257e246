#pragma once

// Small file helpers shared by the library, the CLI and the tests.

#include <filesystem>
#include <string>

#include "remember/errors.hpp"

namespace remember {

// Reads the whole file as bytes-in-a-string. Throws IoError.
std::string read_file(const std::filesystem::path& path);

// Writes the whole file, creating parent directories as needed. Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace remember
