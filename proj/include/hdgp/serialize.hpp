#pragma once

#include <string>

#include "hdgp/models.hpp"

namespace hdgp {

// Tagged JSON document carrying the complete fitted state (factorizations
// included), so a reloaded model predicts bit-identically.
std::string model_to_json(const ZooModel& model);
ZooModel model_from_json(const std::string& text);

void save_model_json(const ZooModel& model, const std::string& path);
ZooModel load_model_json(const std::string& path);

}  // namespace hdgp
