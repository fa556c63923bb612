#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "ocr/geom.hpp"

namespace ocr {

using Json = nlohmann::json;

inline Json to_json(Point2 p) { return Json::array({p.x, p.y}); }
inline Json to_json(const Pose2& p) { return Json::array({p.x(), p.y(), p.theta()}); }
Json to_json(const KeypointSet& k);

Point2 point_from_json(const Json& j);
Pose2 pose_from_json(const Json& j);
KeypointSet keypoints_from_json(const Json& j);

/// Opens a file for reading; missing files raise ErrorKind::kMissingFile.
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace ocr
