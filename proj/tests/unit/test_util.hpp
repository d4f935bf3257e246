#pragma once

// Shared helpers for the unit tests: tiny corpus construction and scratch
// directories.

#include <filesystem>
#include <string>
#include <vector>

#include "remember/corpus.hpp"

inline remember::ReferenceCase make_case(
    const std::string& id, const remember::Vector& embedding,
    remember::Abnormality abn = remember::Abnormality::Normal,
    remember::Dementia dem = remember::Dementia::NonDementia,
    const std::string& description = "reference description") {
  remember::ReferenceCase c;
  c.id = id;
  c.image_embedding = embedding;
  c.abn_embedding = embedding;
  c.dx_embedding = embedding;
  c.desc_embedding = embedding;
  c.abnormality = abn;
  c.dementia = dem;
  c.description = description;
  return c;
}

inline std::filesystem::path test_tmp_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "remember-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}
