#pragma once

#include <string>

namespace seleval {

// Write-to-temp + rename; no partial output files are left behind on failure.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace seleval
