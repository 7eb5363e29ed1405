#pragma once

#include <string>

#include <json.hpp>

#include "marsnet/convert.hpp"
#include "marsnet/lattice.hpp"
#include "marsnet/mars.hpp"
#include "marsnet/network.hpp"

namespace marsnet {

// Shortest representation that parses back to the identical double.
std::string format_double(double value);
double parse_double_strict(const std::string& text);

nlohmann::json model_to_json(const MarsModel& model);
MarsModel model_from_json(const nlohmann::json& j);

nlohmann::json network_to_json(const DenseNetwork& net);
DenseNetwork network_from_json(const nlohmann::json& j);

nlohmann::json lattice_to_json(const LatticePwl& lattice);
LatticePwl lattice_from_json(const nlohmann::json& j);

nlohmann::json conversion_report_to_json(const ConversionReport& report);
nlohmann::json shift_report_to_json(const ShiftReport& report);

void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

// CSV: epoch,train_loss,seconds
void write_train_history_csv(const TrainHistory& history, const std::string& path);
TrainHistory read_train_history_csv(const std::string& path);

// CSV: layer,w_delta_frobenius,b_delta_norm,relative_shift,max_abs_change
void write_shift_report_csv(const ShiftReport& report, const std::string& path);
ShiftReport read_shift_report_csv(const std::string& path);

}  // namespace marsnet
