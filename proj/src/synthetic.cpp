#include "marsnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "marsnet/rng.hpp"
#include "marsnet/serialize.hpp"

namespace marsnet {

namespace {

std::string num(double v) { return format_double(v); }

std::string integer(double v, double lo, double hi) {
  const double r = std::clamp(std::round(v), lo, hi);
  return std::to_string(static_cast<long long>(r));
}

}  // namespace

RawTable synth_abalone_like(std::uint64_t seed) {
  RawTable table;
  table.column_names = {"sex",          "length",         "diameter",
                        "height",       "whole_weight",   "shucked_weight",
                        "viscera_weight", "shell_weight", "rings"};
  table.column_kinds = {ColumnKind::Categorical, ColumnKind::Numeric, ColumnKind::Numeric,
                        ColumnKind::Numeric,     ColumnKind::Numeric, ColumnKind::Numeric,
                        ColumnKind::Numeric,     ColumnKind::Numeric, ColumnKind::Numeric};

  std::mt19937_64 gen(mix_seed(seed, 0xAB));
  for (int i = 0; i < 4177; ++i) {
    const double su = uniform01(gen);
    const char* sex = su < 0.36 ? "M" : (su < 0.68 ? "F" : "I");
    const bool infant = sex[0] == 'I';

    const double u = uniform01(gen);
    const double size = infant ? 0.08 + 0.54 * std::pow(u, 0.9) : 0.18 + 0.64 * std::pow(u, 0.7);
    const double length = std::clamp(size + 0.02 * normal01(gen), 0.04, 0.95);
    const double diameter = std::clamp(0.80 * length + 0.01 + 0.015 * normal01(gen), 0.03, 0.90);
    const double height = std::clamp(0.35 * diameter + 0.01 * normal01(gen), 0.005, 0.60);
    const double whole =
        std::max(0.002, 4.6 * std::pow(length, 3.0) * (1.0 + 0.08 * normal01(gen)));
    const double shucked = std::max(0.001, whole * (0.42 + 0.03 * normal01(gen)));
    const double viscera = std::max(0.001, whole * (0.22 + 0.02 * normal01(gen)));
    const double shell = std::max(0.001, whole * (0.27 + 0.02 * normal01(gen)));
    const double rings = 1.5 + 21.0 * std::pow(length, 1.4) + (infant ? -1.2 : 0.4) +
                         1.5 * normal01(gen);

    table.rows.push_back({sex, num(length), num(diameter), num(height), num(whole), num(shucked),
                          num(viscera), num(shell), integer(rings, 1, 29)});
  }
  return table;
}

RawTable synth_wine_like(std::uint64_t seed) {
  RawTable table;
  table.column_names = {"fixed_acidity",      "volatile_acidity", "citric_acid",
                        "residual_sugar",     "chlorides",        "free_sulfur_dioxide",
                        "total_sulfur_dioxide", "density",        "ph",
                        "sulphates",          "alcohol",          "quality"};
  table.column_kinds.assign(12, ColumnKind::Numeric);

  std::mt19937_64 gen(mix_seed(seed, 0x57));
  for (int i = 0; i < 4898; ++i) {
    const double alcohol = 8.0 + 6.0 * std::pow(uniform01(gen), 1.2);
    const double volatile_acidity = 0.08 + 0.6 * std::pow(uniform01(gen), 2.0);
    const double sulphates = 0.22 + 0.6 * uniform01(gen);
    const double residual_sugar = 0.6 + 19.0 * std::pow(uniform01(gen), 3.0);
    const double chlorides = 0.012 + 0.2 * std::pow(uniform01(gen), 4.0);
    const double free_so2 = 2.0 + 80.0 * std::pow(uniform01(gen), 1.3);
    const double total_so2 = free_so2 + 30.0 + 160.0 * std::pow(uniform01(gen), 1.1);
    const double density = 0.9871 + 0.00045 * residual_sugar - 0.00032 * (alcohol - 8.0) +
                           0.0006 * uniform01(gen);
    const double ph = 2.7 + 0.6 * uniform01(gen);
    const double citric = 0.05 + 0.6 * std::pow(uniform01(gen), 1.5);
    const double fixed_acidity = 4.8 + 4.0 * uniform01(gen);

    const double quality = 5.88 + 0.35 * (alcohol - 10.6) - 1.9 * (volatile_acidity - 0.28) +
                           0.9 * (sulphates - 0.52) + 0.7 * normal01(gen);

    table.rows.push_back({num(fixed_acidity), num(volatile_acidity), num(citric),
                          num(residual_sugar), num(chlorides), num(free_so2), num(total_so2),
                          num(density), num(ph), num(sulphates), num(alcohol),
                          integer(quality, 3, 9)});
  }
  return table;
}

}  // namespace marsnet
