#pragma once

#include <string>

namespace lambert {

// Writes via a temp file in the same directory, then renames into place.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

}  // namespace lambert
