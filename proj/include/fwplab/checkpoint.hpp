#pragma once

#include <string>

#include "fwplab/model.hpp"

namespace fwplab {

// Write via temp file + rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// { "config": {...}, "weights": { name -> {rows, cols, data} } }
std::string checkpoint_to_json(const Model& m);
Model checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace fwplab
