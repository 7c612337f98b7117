// Copyright 2026 The gridse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gridse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gridse/errors.hpp"
#include "gridse/rng.hpp"

namespace gridse {

using nlohmann::json;

std::span<Sample> Dataset::split(Split which) {
  auto* base = samples.data();
  switch (which) {
    case Split::Train:
      return {base, static_cast<std::size_t>(sizes.train)};
    case Split::Validation:
      return {base + sizes.train, static_cast<std::size_t>(sizes.val)};
    case Split::Test:
      return {base + sizes.train + sizes.val,
              static_cast<std::size_t>(sizes.test)};
  }
  throw DataError("unknown split");
}

std::span<const Sample> Dataset::split(Split which) const {
  const auto* base = samples.data();
  switch (which) {
    case Split::Train:
      return {base, static_cast<std::size_t>(sizes.train)};
    case Split::Validation:
      return {base + sizes.train, static_cast<std::size_t>(sizes.val)};
    case Split::Test:
      return {base + sizes.train + sizes.val,
              static_cast<std::size_t>(sizes.test)};
  }
  throw DataError("unknown split");
}

json Dataset::manifest() const {
  json m;
  m["schema_version"] = 1;
  m["network_hash"] = network_hash;
  m["placement"] = placement.to_json();
  m["variance"] = variance;
  m["var_floor"] = var_floor;
  m["base_seed"] = base_seed;
  m["sizes"] = {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  m["envelope"] = {{"mag_min", envelope.mag_min},
                   {"mag_max", envelope.mag_max},
                   {"ang_min", envelope.ang_min},
                   {"ang_max", envelope.ang_max}};
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the tagged seed
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

StateVector draw_truth_state(int bus_count, const TruthEnvelope& envelope,
                             std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd re(bus_count), im(bus_count);
  for (int i = 0; i < bus_count; ++i) {
    const double mag = rng.uniform(envelope.mag_min, envelope.mag_max);
    const double ang = rng.uniform(envelope.ang_min, envelope.ang_max);
    re[i] = mag * std::cos(ang);
    im[i] = mag * std::sin(ang);
  }
  return StateVector(std::move(re), std::move(im));
}

namespace {

constexpr std::uint64_t kTruthStream = 0;
constexpr std::uint64_t kNoiseStream = 1;

Sample make_sample(const PowerNetwork& net, const PmuPlacement& placement,
                   double variance, double var_floor,
                   const TruthEnvelope& envelope, std::uint64_t sample_seed) {
  Sample sample;
  sample.seed = sample_seed;
  const StateVector truth = draw_truth_state(
      net.bus_count(), envelope, derive_seed(sample_seed, kTruthStream));
  sample.truth = truth.flat();
  NoiseSpec noise = NoiseSpec::from_variance(variance);
  noise.var_floor = var_floor;
  const std::vector<PhasorMeasurement> measurements = simulate_measurements(
      net, truth, placement, noise, derive_seed(sample_seed, kNoiseStream));
  const MeasurementSystem sys = assemble_system(net, measurements);
  sample.moments = sys.moments;
  try {
    sample.label = solve_exact(sys).x.flat();
  } catch (const SingularGainError& e) {
    throw SingularGainError("labeling sample with seed " +
                                std::to_string(sample_seed) +
                                " failed: " + e.what(),
                            e.rank_deficiency());
  }
  return sample;
}

}  // namespace

Dataset generate_dataset(const PowerNetwork& net, const PmuPlacement& placement,
                         double variance, const DatasetSizes& sizes,
                         std::uint64_t base_seed,
                         const TruthEnvelope& envelope) {
  placement.validate(net);
  if (sizes.train < 0 || sizes.val < 0 || sizes.test < 0)
    throw ConfigError("dataset sizes must be nonnegative");

  // fail fast on unobservable placements
  {
    const auto descs = placement.descriptors(net);
    std::vector<RectangularMoments> probe(descs.size(),
                                          RectangularMoments{0, 0, 1, 1, 0});
    const MeasurementSystem probe_sys = assemble_system(net, descs, probe);
    const Observability obs = observability_check(probe_sys);
    if (!obs.observable)
      throw DataError("placement is not observable (rank deficiency " +
                      std::to_string(obs.rank_deficiency) + ")");
  }

  Dataset ds;
  ds.network_hash = net.content_hash();
  ds.placement = placement;
  ds.variance = variance;
  ds.base_seed = base_seed;
  ds.sizes = sizes;
  ds.envelope = envelope;
  ds.samples.reserve(static_cast<std::size_t>(sizes.total()));
  for (int i = 0; i < sizes.total(); ++i) {
    ds.samples.push_back(make_sample(net, placement, variance, ds.var_floor,
                                     envelope,
                                     base_seed + static_cast<std::uint64_t>(i)));
  }
  return ds;
}

void apply_phasor_removal(Dataset& dataset, Split split,
                          const RemovalSpec& removal) {
  std::set<int> indices(removal.phasors.begin(), removal.phasors.end());
  for (int pmu : removal.pmus)
    for (int p : dataset.placement.phasors_of_pmu(pmu)) indices.insert(p);
  const int phasor_count = dataset.placement.phasor_count();
  for (int p : indices)
    if (p < 0 || p >= phasor_count)
      throw DataError("removal references unknown phasor " + std::to_string(p));
  for (Sample& sample : dataset.split(split)) {
    std::set<int> merged(sample.removed_phasors.begin(),
                         sample.removed_phasors.end());
    merged.insert(indices.begin(), indices.end());
    sample.removed_phasors.assign(merged.begin(), merged.end());
  }
}

void mix_outlier_samples(Dataset& dataset, const PowerNetwork& net,
                         Split split, double fraction, double factor,
                         std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("outlier fraction must be in [0, 1]");
  if (net.content_hash() != dataset.network_hash)
    throw DataError("network does not match the dataset manifest");
  auto samples = dataset.split(split);
  const auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(samples.size())));

  // choose which samples get an outlier: deterministic shuffle of indices
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick_rng(seed);
  pick_rng.shuffle(order);

  NoiseSpec noise = NoiseSpec::from_variance(dataset.variance);
  noise.var_floor = dataset.var_floor;

  for (std::size_t c = 0; c < count; ++c) {
    Sample& sample = samples[order[c]];
    // reconstruct the sample's polar measurements from its seed
    const StateVector truth = StateVector::from_flat(sample.truth);
    const std::vector<PolarPhasor> exact =
        exact_phasors(net, truth, dataset.placement);
    std::vector<PhasorMeasurement> measurements = simulate_measurements(
        net, truth, dataset.placement, noise,
        derive_seed(sample.seed, kNoiseStream));
    const std::uint64_t outlier_seed = derive_seed(sample.seed, 2 + seed);
    const int victim = static_cast<int>(
        Rng(outlier_seed).next_u64() %
        static_cast<std::uint64_t>(measurements.size()));
    measurements = inject_outlier(measurements, exact, victim, factor,
                                  derive_seed(outlier_seed, 3));
    const MeasurementSystem sys = assemble_system(net, measurements);
    sample.moments = sys.moments;
    sample.outlier_phasor = victim;
    sample.outlier_factor = factor;
    // label stays the clean exact-WLS solution
  }
}

MeasurementSystem sample_full_system(const Dataset& dataset,
                                     const PowerNetwork& net,
                                     const Sample& sample) {
  return assemble_system(net, dataset.placement.descriptors(net),
                         sample.moments);
}

MeasurementSystem sample_system(const Dataset& dataset,
                                const PowerNetwork& net,
                                const Sample& sample) {
  const auto all_descs = dataset.placement.descriptors(net);
  if (sample.removed_phasors.empty())
    return assemble_system(net, all_descs, sample.moments);
  std::set<int> removed(sample.removed_phasors.begin(),
                        sample.removed_phasors.end());
  std::vector<MeasurementDescriptor> descs;
  std::vector<RectangularMoments> moments;
  for (std::size_t p = 0; p < all_descs.size(); ++p) {
    if (removed.count(static_cast<int>(p))) continue;
    descs.push_back(all_descs[p]);
    moments.push_back(sample.moments[p]);
  }
  return assemble_system(net, descs, moments);
}

PreparedSplit prepare_split(const Dataset& dataset, const PowerNetwork& net,
                            Split split) {
  const auto samples = dataset.split(split);
  PreparedSplit prepared;
  prepared.graphs.reserve(samples.size());
  prepared.samples.reserve(samples.size());

  const auto descriptors = dataset.placement.descriptors(net);
  for (const Sample& sample : samples) {
    MeasurementSystem sys = assemble_system(net, descriptors, sample.moments);
    AugmentedFactorGraph graph = AugmentedFactorGraph::build(net, sys);
    if (!sample.removed_phasors.empty())
      graph = graph.remove_phasors(sample.removed_phasors);
    prepared.graphs.push_back(std::move(graph));
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    prepared.samples.push_back({&prepared.graphs[i], samples[i].label});
  return prepared;
}

namespace {

constexpr char kDatasetMagic[8] = {'G', 'S', 'E', 'D', 'S', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated dataset file");
  return v;
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

Eigen::VectorXd read_vector(std::istream& in) {
  const auto size = read_pod<std::uint32_t>(in);
  Eigen::VectorXd v(size);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * size));
  if (!in) throw DataError("truncated dataset file");
  return v;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset: " + path.string());
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  const std::string header = dataset.manifest().dump();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod<std::uint32_t>(out,
                           static_cast<std::uint32_t>(dataset.samples.size()));
  for (const Sample& sample : dataset.samples) {
    write_pod<std::uint64_t>(out, sample.seed);
    write_pod<std::int32_t>(out, sample.outlier_phasor);
    write_pod<double>(out, sample.outlier_factor);
    write_pod<std::uint32_t>(
        out, static_cast<std::uint32_t>(sample.removed_phasors.size()));
    for (int p : sample.removed_phasors) write_pod<std::int32_t>(out, p);
    write_vector(out, sample.truth);
    write_vector(out, sample.label);
    write_pod<std::uint32_t>(out,
                             static_cast<std::uint32_t>(sample.moments.size()));
    for (const RectangularMoments& m : sample.moments) {
      write_pod<double>(out, m.re);
      write_pod<double>(out, m.im);
      write_pod<double>(out, m.var_re);
      write_pod<double>(out, m.var_im);
      write_pod<double>(out, m.cov_re_im);
    }
  }
  if (!out) throw ConfigError("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw DataError("not a dataset file: " + path.string());
  const auto header_len = read_pod<std::uint32_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("truncated dataset header");
  const json header = json::parse(header_text);
  if (header.at("schema_version").get<int>() != 1)
    throw DataError("unsupported dataset schema version");

  Dataset ds;
  ds.network_hash = header.at("network_hash").get<std::uint64_t>();
  ds.placement = PmuPlacement::from_json(header.at("placement"));
  ds.variance = header.at("variance").get<double>();
  ds.var_floor = header.at("var_floor").get<double>();
  ds.base_seed = header.at("base_seed").get<std::uint64_t>();
  ds.sizes.train = header.at("sizes").at("train").get<int>();
  ds.sizes.val = header.at("sizes").at("val").get<int>();
  ds.sizes.test = header.at("sizes").at("test").get<int>();
  ds.envelope.mag_min = header.at("envelope").at("mag_min").get<double>();
  ds.envelope.mag_max = header.at("envelope").at("mag_max").get<double>();
  ds.envelope.ang_min = header.at("envelope").at("ang_min").get<double>();
  ds.envelope.ang_max = header.at("envelope").at("ang_max").get<double>();

  const auto sample_count = read_pod<std::uint32_t>(in);
  if (static_cast<int>(sample_count) != ds.sizes.total())
    throw DataError("dataset sample count does not match manifest");
  ds.samples.reserve(sample_count);
  for (std::uint32_t i = 0; i < sample_count; ++i) {
    Sample sample;
    sample.seed = read_pod<std::uint64_t>(in);
    sample.outlier_phasor = read_pod<std::int32_t>(in);
    sample.outlier_factor = read_pod<double>(in);
    const auto removed = read_pod<std::uint32_t>(in);
    for (std::uint32_t r = 0; r < removed; ++r)
      sample.removed_phasors.push_back(read_pod<std::int32_t>(in));
    sample.truth = read_vector(in);
    sample.label = read_vector(in);
    const auto moment_count = read_pod<std::uint32_t>(in);
    sample.moments.reserve(moment_count);
    for (std::uint32_t m = 0; m < moment_count; ++m) {
      RectangularMoments mm;
      mm.re = read_pod<double>(in);
      mm.im = read_pod<double>(in);
      mm.var_re = read_pod<double>(in);
      mm.var_im = read_pod<double>(in);
      mm.cov_re_im = read_pod<double>(in);
      sample.moments.push_back(mm);
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace gridse
