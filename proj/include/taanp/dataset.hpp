#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "taanp/world.hpp"

namespace taanp::world {

// On-disk layout: manifest.txt (key-value), segments.csv, adjacency.csv,
// series.csv. Time indices are 15-minute intervals from the epoch declared
// in the manifest. Numbers use shortest round-trip formatting so a
// save/load cycle is value-exact.

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

struct Reader {
  explicit Reader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open file: " + path);
  }

  // Returns false at EOF.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields = split_line(line);
      return true;
    }
    return false;
  }

  void expect_header(const std::vector<std::string>& names) {
    std::vector<std::string> fields;
    if (!next(fields)) throw ParseError("missing header in " + path_, 1, 1);
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i >= fields.size() || fields[i] != names[i])
        throw ParseError("missing or misnamed column '" + names[i] + "' in " +
                             path_,
                         line_no_, i + 1);
    }
    if (fields.size() != names.size())
      throw ParseError("unexpected extra columns in " + path_, line_no_,
                       names.size() + 1);
    n_cols_ = names.size();
  }

  double as_double(const std::vector<std::string>& f, std::size_t col) {
    require_cols(f);
    bool ok = false;
    double v = parse_double(f[col], ok);
    if (!ok)
      throw ParseError("bad numeric value '" + f[col] + "' in " + path_,
                       line_no_, col + 1);
    return v;
  }

  long long as_int(const std::vector<std::string>& f, std::size_t col) {
    require_cols(f);
    bool ok = false;
    long long v = parse_int(f[col], ok);
    if (!ok)
      throw ParseError("bad integer value '" + f[col] + "' in " + path_,
                       line_no_, col + 1);
    return v;
  }

  std::size_t line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  void require_cols(const std::vector<std::string>& f) {
    if (f.size() != n_cols_)
      throw ParseError("wrong field count in " + path_, line_no_, f.size());
  }

  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::size_t n_cols_ = 0;
};

}  // namespace csv

inline void save_world(const World& w, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto p = [&](const char* name) {
    return (std::filesystem::path(dir) / name).string();
  };

  std::ostringstream man;
  man << "taanp-dataset v1\n";
  man << "n_segments " << w.n_segments() << "\n";
  man << "n_steps " << w.n_steps() << "\n";
  man << "steps_per_day " << w.flow.steps_per_day << "\n";
  man << "epoch " << w.config.epoch_iso << "\n";
  man << "epoch_day_of_week " << w.config.epoch_dow << "\n";
  man << "interval_minutes 15\n";
  write_text_file(p("manifest.txt"), man.str());

  std::ostringstream seg;
  seg << "id,class,lanes,length_m,betweenness,closeness\n";
  for (const Segment& s : w.graph.segments) {
    seg << s.id << "," << road_class_name(s.cls) << "," << s.lanes << ","
        << format_double(s.length_m) << "," << format_double(s.betweenness)
        << "," << format_double(s.closeness) << "\n";
  }
  write_text_file(p("segments.csv"), seg.str());

  std::ostringstream adj;
  adj << "from_id,to_id\n";
  for (auto [a, b] : w.graph.edges) adj << a << "," << b << "\n";
  write_text_file(p("adjacency.csv"), adj.str());

  std::ostringstream ser;
  ser << "segment_id,t_index,flow,valid_flag,fcd_flow,fcd_speed,fcd_avail\n";
  for (int s = 0; s < w.n_segments(); ++s) {
    for (int t = 0; t < w.n_steps(); ++t) {
      bool valid = w.observation_valid(s, t);
      double flow = valid ? w.flow.y_obs(s, t) : 0.0;
      ser << s << "," << t << "," << format_double(flow) << ","
          << (valid ? 1 : 0) << "," << format_double(w.fcd.fcd_flow(s, t))
          << "," << format_double(w.fcd.fcd_speed(s, t)) << ","
          << (w.fcd.availability(s, t) > 0 ? 1 : 0) << "\n";
    }
  }
  write_text_file(p("series.csv"), ser.str());
}

// Loads an externally supplied dataset. Ground truth is marked unavailable:
// evaluation on such a world is restricted to held-out observed sensors.
inline World load_world(const std::string& dir) {
  auto p = [&](const char* name) {
    return (std::filesystem::path(dir) / name).string();
  };
  World w;
  w.has_truth = false;

  {
    std::ifstream man(p("manifest.txt"));
    if (!man) throw IoError("cannot open manifest: " + p("manifest.txt"));
    std::string line;
    std::getline(man, line);
    if (line != "taanp-dataset v1")
      throw IoError("not a dataset manifest: " + p("manifest.txt"));
    int n_segments = -1, n_steps = -1;
    while (std::getline(man, line)) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "n_segments") ls >> n_segments;
      else if (key == "n_steps") ls >> n_steps;
      else if (key == "steps_per_day") ls >> w.config.steps_per_day;
      else if (key == "epoch") ls >> w.config.epoch_iso;
      else if (key == "epoch_day_of_week") ls >> w.config.epoch_dow;
    }
    if (n_segments < 1 || n_steps < 1)
      throw IntegrityError("manifest missing n_segments/n_steps");
    w.config.n_segments = n_segments;
    w.config.days = n_steps / std::max(1, w.config.steps_per_day);
    w.flow.steps_per_day = w.config.steps_per_day;
    w.flow.f_true = Tensor(static_cast<std::size_t>(n_segments),
                           static_cast<std::size_t>(n_steps));
    w.flow.y_obs = Tensor(static_cast<std::size_t>(n_segments),
                          static_cast<std::size_t>(n_steps));
    w.fcd.fcd_flow = w.flow.y_obs;
    w.fcd.fcd_speed = w.flow.y_obs;
    w.fcd.availability = w.flow.y_obs;
    w.missing.n_segments = static_cast<std::size_t>(n_segments);
    w.missing.n_steps = static_cast<std::size_t>(n_steps);
    w.missing.valid.assign(
        static_cast<std::size_t>(n_segments) * static_cast<std::size_t>(n_steps),
        0);
  }

  {
    csv::Reader r(p("segments.csv"));
    r.expect_header({"id", "class", "lanes", "length_m", "betweenness",
                     "closeness"});
    std::vector<std::string> f;
    while (r.next(f)) {
      Segment s;
      s.id = static_cast<int>(r.as_int(f, 0));
      if (s.id < 0 || s.id >= w.config.n_segments)
        throw IntegrityError("segment id out of range in segments.csv: " +
                             std::to_string(s.id));
      s.cls = road_class_from_name(f[1]);
      s.lanes = static_cast<int>(r.as_int(f, 2));
      s.length_m = r.as_double(f, 3);
      s.betweenness = r.as_double(f, 4);
      s.closeness = r.as_double(f, 5);
      if (static_cast<int>(w.graph.segments.size()) != s.id)
        throw IntegrityError("segments.csv ids must be dense and ordered");
      w.graph.segments.push_back(s);
    }
    if (static_cast<int>(w.graph.segments.size()) != w.config.n_segments)
      throw IntegrityError("segments.csv row count does not match manifest");
  }

  {
    csv::Reader r(p("adjacency.csv"));
    r.expect_header({"from_id", "to_id"});
    std::vector<std::string> f;
    while (r.next(f)) {
      int a = static_cast<int>(r.as_int(f, 0));
      int b = static_cast<int>(r.as_int(f, 1));
      for (int id : {a, b})
        if (id < 0 || id >= w.config.n_segments)
          throw IntegrityError("unknown segment id in adjacency.csv: " +
                               std::to_string(id));
      w.graph.edges.emplace_back(a, b);
    }
    w.graph.rebuild_adjacency();
  }

  {
    csv::Reader r(p("series.csv"));
    r.expect_header({"segment_id", "t_index", "flow", "valid_flag",
                     "fcd_flow", "fcd_speed", "fcd_avail"});
    std::vector<std::string> f;
    while (r.next(f)) {
      int s = static_cast<int>(r.as_int(f, 0));
      int t = static_cast<int>(r.as_int(f, 1));
      if (s < 0 || s >= w.config.n_segments)
        throw IntegrityError("unknown segment id in series.csv: " +
                             std::to_string(s));
      if (t < 0 || t >= static_cast<int>(w.missing.n_steps))
        throw IntegrityError("time index out of range in series.csv: " +
                             std::to_string(t));
      double flow = r.as_double(f, 2);
      long long valid = r.as_int(f, 3);
      w.flow.y_obs(s, t) = flow;
      w.missing.set(static_cast<std::size_t>(s), static_cast<std::size_t>(t),
                    valid != 0);
      w.fcd.fcd_flow(s, t) = r.as_double(f, 4);
      w.fcd.fcd_speed(s, t) = r.as_double(f, 5);
      w.fcd.availability(s, t) = r.as_int(f, 6) != 0 ? 1.0 : 0.0;
    }
  }

  // Segment-wise time-average penetration estimate, induced by aggregation.
  w.fcd.penetration.assign(static_cast<std::size_t>(w.config.n_segments), 0.0);
  for (int s = 0; s < w.config.n_segments; ++s) {
    double probe = 0.0, total = 0.0;
    for (int t = 0; t < static_cast<int>(w.missing.n_steps); ++t) {
      if (!w.observation_valid(s, t)) continue;
      probe += w.fcd.fcd_flow(s, t);
      total += w.flow.y_obs(s, t);
    }
    w.fcd.penetration[static_cast<std::size_t>(s)] =
        total > 0.0 ? probe / total : 0.0;
  }
  return w;
}

}  // namespace taanp::world
