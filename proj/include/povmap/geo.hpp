#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace povmap::geo {

/// IUGG mean Earth radius, kilometers.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Kilometers per degree of latitude in the local equirectangular
/// approximation used for bounding boxes.
inline constexpr double kKmPerDegree = 111.32;

struct GeoPoint {
    double lat = 0.0; // degrees, [-90, 90]
    double lon = 0.0; // degrees, [-180, 180]

    bool operator==(const GeoPoint &) const = default;
};

/// Throws Error("InvalidCoordinate") unless lat/lon are finite and in range.
void validate_point(const GeoPoint &p, const std::string &context);

/// Great-circle distance in km on the kEarthRadiusKm sphere.
double haversine_km(const GeoPoint &a, const GeoPoint &b);

/// Folds a longitude difference into [-180, 180].
double wrap_lon_delta(double delta_degrees);

/// Square ground-distance box, axis-aligned in lat/lon after a local
/// equirectangular meters-to-degrees conversion at the center's latitude.
struct BBox {
    GeoPoint center;
    double width_km = 0.0;

    /// Half-extents in degrees.
    double half_dlat() const;
    double half_dlon() const;

    /// Axis-aligned containment, boundary inclusive. Longitude differences
    /// are wrapped to [-180, 180] before comparison.
    bool contains(const GeoPoint &p) const;
};

/// Immutable point index answering nearest / radius / box queries over
/// WGS-84 points, exactly as a linear scan with haversine_km would. The
/// balanced tree is built over unit-sphere coordinates; pruning happens in
/// chord space with an inflated bound and every accept/reject decision is
/// re-made with haversine_km itself, so results match the scan bit for bit.
class SpatialIndex {
  public:
    SpatialIndex() = default;

    /// Builds the index; ids need not be unique but ties on equal distance
    /// resolve to the lexicographically smallest id.
    static SpatialIndex build(std::vector<std::pair<std::string, GeoPoint>> points);

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

    /// Id and distance of the point minimizing haversine_km to q; ties break
    /// to the smallest id. Throws Error("EmptyIndex") when empty.
    std::pair<std::string, double> nearest(const GeoPoint &q) const;

    /// Same as nearest but returns the internal slot, avoiding the id copy.
    std::pair<std::size_t, double> nearest_slot(const GeoPoint &q) const;

    /// Ids with haversine_km(q, p) <= r_km (closed ball), sorted by id.
    /// Throws Error("NonPositiveRadius") when r_km <= 0.
    std::vector<std::string> within_radius(const GeoPoint &q, double r_km) const;

    /// (slot, distance_km) pairs within the closed ball, sorted by slot.
    std::vector<std::pair<std::size_t, double>> within_radius_slots(const GeoPoint &q,
                                                                    double r_km) const;

    /// Ids contained in the box (boundary inclusive), sorted by id.
    std::vector<std::string> within_bbox(const BBox &box) const;

    std::vector<std::size_t> within_bbox_slots(const BBox &box) const;

    const std::string &id_of(std::size_t slot) const { return ids_[slot]; }
    const GeoPoint &point_of(std::size_t slot) const { return pts_[slot]; }

  private:
    struct Node {
        std::uint32_t begin = 0, end = 0;       // leaf range when leaf
        std::int32_t left = -1, right = -1;     // children when internal
        double min3[3] = {0, 0, 0};             // unit-sphere AABB
        double max3[3] = {0, 0, 0};
        double lat_min = 0, lat_max = 0;
        double lon_min = 0, lon_max = 0;
        bool leaf = true;
    };

    std::int32_t build_node(std::uint32_t begin, std::uint32_t end);
    void nearest_walk(std::int32_t node, const GeoPoint &q, double qx, double qy,
                      double qz, std::size_t &best_slot, double &best_km,
                      double &best_chord_bound) const;
    void radius_walk(std::int32_t node, const GeoPoint &q, double qx, double qy,
                     double qz, double r_km, double chord_sq_bound,
                     std::vector<std::pair<std::size_t, double>> &out) const;
    void bbox_walk(std::int32_t node, const BBox &box, double lat_lo, double lat_hi,
                   double lon_lo, double lon_hi, std::vector<std::size_t> &out) const;
    double min_chord_sq_to_box(const Node &nd, double qx, double qy, double qz) const;

    std::vector<std::string> ids_;   // slot -> id
    std::vector<GeoPoint> pts_;      // slot -> point
    std::vector<std::uint32_t> order_; // tree order -> slot
    std::vector<double> xs_, ys_, zs_; // unit-sphere coords in tree order
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

} // namespace povmap::geo
