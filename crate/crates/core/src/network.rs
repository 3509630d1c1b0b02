//! Three-layer network of homes, points of interest and the county physical system.
//!
//! Homes (`h`) and POIs (`s`) are linked within a layer and from homes to POIs
//! when they lie within a neighbourhood radius. The physical layer is a single
//! node that carries only its self-link and reaches every home.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// One mile, the default reach of every neighbourhood edge family.
pub const NEIGHBORHOOD_RADIUS_KM: f64 = 1.609;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "h")]
    Home,
    #[serde(rename = "s")]
    Social,
    #[serde(rename = "p")]
    Physical,
}

impl Layer {
    pub fn tag(self) -> &'static str {
        match self {
            Layer::Home => "h",
            Layer::Social => "s",
            Layer::Physical => "p",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Layer> {
        match tag {
            "h" => Some(Layer::Home),
            "s" => Some(Layer::Social),
            "p" => Some(Layer::Physical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub layer: Layer,
    pub index: usize,
}

impl NodeId {
    pub fn home(index: usize) -> Self {
        NodeId { layer: Layer::Home, index }
    }
    pub fn social(index: usize) -> Self {
        NodeId { layer: Layer::Social, index }
    }
    pub fn physical() -> Self {
        NodeId { layer: Layer::Physical, index: 0 }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.layer.tag(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    LocalPlaneKm,
    #[serde(rename = "wgs84")]
    Wgs84,
}

/// A location. In `Wgs84`, `x` is longitude and `y` latitude, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
    pub frame: Frame,
}

impl GeoPoint {
    pub fn local(x_km: f64, y_km: f64) -> Self {
        GeoPoint { x: x_km, y: y_km, frame: Frame::LocalPlaneKm }
    }

    pub fn wgs84(lon: f64, lat: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Domain(format!("coordinate out of range: lon {lon}, lat {lat}")));
        }
        Ok(GeoPoint { x: lon, y: lat, frame: Frame::Wgs84 })
    }

    pub fn new(frame: Frame, x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!("non-finite coordinate ({x}, {y})")));
        }
        match frame {
            Frame::LocalPlaneKm => Ok(Self::local(x, y)),
            Frame::Wgs84 => Self::wgs84(x, y),
        }
    }
}

/// Euclidean distance in the local plane, great-circle distance on WGS84.
pub fn distance(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    if a.frame != b.frame {
        return Err(Error::FrameMismatch(a.frame, b.frame));
    }
    Ok(match a.frame {
        Frame::LocalPlaneKm => (a.x - b.x).hypot(a.y - b.y),
        Frame::Wgs84 => haversine_km(a, b),
    })
}

fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.y.to_radians(), b.y.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.x - a.x).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Compressed sparse rows; row `i` lists the targets adjacent to source `i`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Adjacency {
    fn from_rows(rows: impl IntoIterator<Item = Vec<u32>>) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Adjacency { offsets, targets }
    }

    pub fn sources(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn row(&self, source: usize) -> &[u32] {
        &self.targets[self.offsets[source]..self.offsets[source + 1]]
    }

    pub fn degree(&self, source: usize) -> usize {
        self.offsets[source + 1] - self.offsets[source]
    }

    /// Number of stored (directed) entries.
    pub fn entries(&self) -> usize {
        self.targets.len()
    }

    /// Unique undirected pairs `(i, j)` with `i < j`, for a symmetric adjacency.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        (0..self.sources())
            .flat_map(|i| {
                self.row(i)
                    .iter()
                    .map(|&j| j as usize)
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect()
    }

    /// All `(source, target)` pairs in row order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.sources())
            .flat_map(|i| self.row(i).iter().map(move |&j| (i, j as usize)))
            .collect()
    }

    fn transpose(&self, n_targets: usize) -> Adjacency {
        let mut rows = vec![Vec::new(); n_targets];
        for s in 0..self.sources() {
            for &t in self.row(s) {
                rows[t as usize].push(s as u32);
            }
        }
        Self::from_rows(rows)
    }
}

/// Uniform bucketing such that any two points within `radius` fall in the same
/// or adjacent cells.
struct Grid {
    origin: (f64, f64),
    cell: (f64, f64),
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl Grid {
    /// Returns `None` when bucketing would not be exact (antimeridian proximity
    /// or a polar cap) and the caller should fall back to an all-pairs scan.
    fn cell_size(frame: Frame, radius: f64, points: &[&[GeoPoint]]) -> Option<(f64, f64)> {
        match frame {
            Frame::LocalPlaneKm => Some((radius, radius)),
            Frame::Wgs84 => {
                let angle = radius / EARTH_RADIUS_KM;
                // |dlat| never exceeds the central angle.
                let cell_lat = angle.to_degrees();
                // hav(d) >= cos^2(phi_max) hav(dlon) bounds the longitude gap.
                let phi_max = points
                    .iter()
                    .flat_map(|ps| ps.iter())
                    .map(|p| p.y.abs())
                    .fold(0.0_f64, f64::max)
                    .to_radians();
                let s = (angle / 2.0).sin() / phi_max.cos();
                if s >= 1.0 {
                    return None;
                }
                let cell_lon = (2.0 * s.asin()).to_degrees();
                let near_antimeridian = points
                    .iter()
                    .flat_map(|ps| ps.iter())
                    .any(|p| p.x.abs() > 180.0 - 2.0 * cell_lon);
                (!near_antimeridian).then_some((cell_lon, cell_lat))
            }
        }
    }

    fn new(points: &[GeoPoint], cell: (f64, f64), origin: (f64, f64)) -> Self {
        let mut grid = Grid { origin, cell, buckets: HashMap::new() };
        for (i, p) in points.iter().enumerate() {
            let key = grid.key(p);
            grid.buckets.entry(key).or_default().push(i as u32);
        }
        grid
    }

    fn key(&self, p: &GeoPoint) -> (i64, i64) {
        (
            ((p.x - self.origin.0) / self.cell.0).floor() as i64,
            ((p.y - self.origin.1) / self.cell.1).floor() as i64,
        )
    }

    fn candidates<'a>(&'a self, p: &GeoPoint) -> impl Iterator<Item = u32> + 'a {
        let (cx, cy) = self.key(p);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).map(move |dy| (cx + dx, cy + dy)))
            .filter_map(move |k| self.buckets.get(&k))
            .flat_map(|b| b.iter().copied())
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be positive, got {radius}")))
    }
}

fn common_frame(sets: &[&[GeoPoint]]) -> Result<Option<Frame>> {
    let mut frame = None;
    for p in sets.iter().flat_map(|s| s.iter()) {
        match frame {
            None => frame = Some(p.frame),
            Some(f) if f != p.frame => return Err(Error::FrameMismatch(f, p.frame)),
            _ => {}
        }
    }
    Ok(frame)
}

fn min_corner(sets: &[&[GeoPoint]]) -> (f64, f64) {
    sets.iter().flat_map(|s| s.iter()).fold((f64::INFINITY, f64::INFINITY), |(x, y), p| {
        (x.min(p.x), y.min(p.y))
    })
}

/// Symmetric adjacency of `points` linking every pair within `radius`. No self-loops.
pub fn intra_adjacency(points: &[GeoPoint], radius: f64) -> Result<Adjacency> {
    check_radius(radius)?;
    let Some(frame) = common_frame(&[points])? else {
        return Ok(Adjacency::from_rows(Vec::new()));
    };
    let within = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        distance(points[a], points[b]).map(|d| d <= radius)
    };
    let mut rows = Vec::with_capacity(points.len());
    match Grid::cell_size(frame, radius, &[points]) {
        Some(cell) => {
            let grid = Grid::new(points, cell, min_corner(&[points]));
            for (i, p) in points.iter().enumerate() {
                let mut row = Vec::new();
                for j in grid.candidates(p) {
                    let j = j as usize;
                    if j != i && within(i, j)? {
                        row.push(j as u32);
                    }
                }
                rows.push(row);
            }
        }
        None => {
            for i in 0..points.len() {
                let mut row = Vec::new();
                for j in 0..points.len() {
                    if j != i && within(i, j)? {
                        row.push(j as u32);
                    }
                }
                rows.push(row);
            }
        }
    }
    Ok(Adjacency::from_rows(rows))
}

/// Adjacency from each home to every node of `others` within `radius`.
pub fn inter_adjacency(homes: &[GeoPoint], others: &[GeoPoint], radius: f64) -> Result<Adjacency> {
    check_radius(radius)?;
    let Some(frame) = common_frame(&[homes, others])? else {
        return Ok(Adjacency::from_rows(vec![Vec::new(); homes.len()]));
    };
    let mut rows = Vec::with_capacity(homes.len());
    match Grid::cell_size(frame, radius, &[homes, others]) {
        Some(cell) => {
            let grid = Grid::new(others, cell, min_corner(&[homes, others]));
            for h in homes {
                let mut row = Vec::new();
                for k in grid.candidates(h) {
                    if distance(*h, others[k as usize])? <= radius {
                        row.push(k);
                    }
                }
                rows.push(row);
            }
        }
        None => {
            for h in homes {
                let mut row = Vec::new();
                for (k, o) in others.iter().enumerate() {
                    if distance(*h, *o)? <= radius {
                        row.push(k as u32);
                    }
                }
                rows.push(row);
            }
        }
    }
    Ok(Adjacency::from_rows(rows))
}

/// Undirected edges `(i, j)`, `i < j`, between points no farther than `radius` apart.
pub fn build_intra_edges(points: &[GeoPoint], radius: f64) -> Result<Vec<(usize, usize)>> {
    Ok(intra_adjacency(points, radius)?.undirected_edges())
}

/// Edges `(home, other)` for every pair within `radius`.
pub fn build_inter_edges(
    homes: &[GeoPoint],
    others: &[GeoPoint],
    radius: f64,
) -> Result<Vec<(usize, usize)>> {
    Ok(inter_adjacency(homes, others, radius)?.pairs())
}

/// Reach of each edge family, in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Radii {
    pub home_home_km: f64,
    pub home_poi_km: f64,
    pub poi_poi_km: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Radii {
            home_home_km: NEIGHBORHOOD_RADIUS_KM,
            home_poi_km: NEIGHBORHOOD_RADIUS_KM,
            poi_poi_km: NEIGHBORHOOD_RADIUS_KM,
        }
    }
}

/// Static network built once per scenario.
#[derive(Debug, Clone)]
pub struct MultilayerNetwork {
    frame: Frame,
    homes: Vec<GeoPoint>,
    pois: Vec<GeoPoint>,
    physical: GeoPoint,
    home_home: Adjacency,
    poi_poi: Adjacency,
    home_poi: Adjacency,
    poi_home: Adjacency,
}

impl MultilayerNetwork {
    pub fn build(
        homes: Vec<GeoPoint>,
        pois: Vec<GeoPoint>,
        physical: GeoPoint,
        radii: Radii,
    ) -> Result<Self> {
        let frame = physical.frame;
        if let Some(f) = common_frame(&[&homes, &pois])? {
            if f != frame {
                return Err(Error::FrameMismatch(frame, f));
            }
        }
        let home_home = intra_adjacency(&homes, radii.home_home_km)?;
        let poi_poi = intra_adjacency(&pois, radii.poi_poi_km)?;
        let home_poi = inter_adjacency(&homes, &pois, radii.home_poi_km)?;
        let poi_home = home_poi.transpose(pois.len());
        Ok(MultilayerNetwork { frame, homes, pois, physical, home_home, poi_poi, home_poi, poi_home })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }
    pub fn n_homes(&self) -> usize {
        self.homes.len()
    }
    pub fn n_pois(&self) -> usize {
        self.pois.len()
    }
    pub fn homes(&self) -> &[GeoPoint] {
        &self.homes
    }
    pub fn pois(&self) -> &[GeoPoint] {
        &self.pois
    }
    pub fn physical(&self) -> GeoPoint {
        self.physical
    }

    pub fn home_neighbors(&self, home: usize) -> &[u32] {
        self.home_home.row(home)
    }
    pub fn home_pois(&self, home: usize) -> &[u32] {
        self.home_poi.row(home)
    }
    pub fn poi_neighbors(&self, poi: usize) -> &[u32] {
        self.poi_poi.row(poi)
    }

    /// Social-layer degree of each POI.
    pub fn poi_degrees(&self) -> Vec<usize> {
        (0..self.pois.len()).map(|j| self.poi_poi.degree(j)).collect()
    }

    pub fn home_home_edges(&self) -> Vec<(usize, usize)> {
        self.home_home.undirected_edges()
    }
    pub fn poi_poi_edges(&self) -> Vec<(usize, usize)> {
        self.poi_poi.undirected_edges()
    }
    pub fn home_poi_edges(&self) -> Vec<(usize, usize)> {
        self.home_poi.pairs()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node.layer {
            Layer::Home => node.index < self.homes.len(),
            Layer::Social => node.index < self.pois.len(),
            Layer::Physical => node.index == 0,
        }
    }

    pub fn location(&self, node: NodeId) -> Result<GeoPoint> {
        match node.layer {
            Layer::Home => self.homes.get(node.index).copied(),
            Layer::Social => self.pois.get(node.index).copied(),
            Layer::Physical => (node.index == 0).then_some(self.physical),
        }
        .ok_or(Error::NodeNotFound(node))
    }

    /// Sorted nodes of `layer` adjacent to `node`.
    pub fn neighbors(&self, node: NodeId, layer: Layer) -> Result<Vec<NodeId>> {
        if !self.contains(node) {
            return Err(Error::NodeNotFound(node));
        }
        let wrap = |row: &[u32], layer: Layer| -> Vec<NodeId> {
            row.iter().map(|&i| NodeId { layer, index: i as usize }).collect()
        };
        let i = node.index;
        Ok(match (node.layer, layer) {
            (Layer::Home, Layer::Home) => wrap(self.home_home.row(i), Layer::Home),
            (Layer::Home, Layer::Social) => wrap(self.home_poi.row(i), Layer::Social),
            (Layer::Social, Layer::Social) => wrap(self.poi_poi.row(i), Layer::Social),
            (Layer::Social, Layer::Home) => wrap(self.poi_home.row(i), Layer::Home),
            (Layer::Home, Layer::Physical) | (Layer::Physical, Layer::Physical) => {
                vec![NodeId::physical()]
            }
            (Layer::Physical, Layer::Home) => (0..self.homes.len()).map(NodeId::home).collect(),
            (Layer::Social, Layer::Physical) | (Layer::Physical, Layer::Social) => Vec::new(),
        })
    }
}

/// Node placements as read from or written to a locations file.
#[derive(Debug, Clone, PartialEq)]
pub struct Locations {
    pub frame: Frame,
    pub homes: Vec<GeoPoint>,
    pub pois: Vec<GeoPoint>,
    pub physical: GeoPoint,
}

pub const LOCATIONS_HEADER: [&str; 4] = ["node_id", "layer", "x_or_lon", "y_or_lat"];

impl Locations {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOCATIONS_HEADER)?;
        let layers = [
            (Layer::Home, self.homes.as_slice()),
            (Layer::Social, self.pois.as_slice()),
            (Layer::Physical, std::slice::from_ref(&self.physical)),
        ];
        for (layer, points) in layers {
            for (i, p) in points.iter().enumerate() {
                w.write_record([i.to_string(), layer.tag().to_string(), p.x.to_string(), p.y.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("writing locations", e))?;
        Ok(())
    }

    /// Parses a locations file. Node ids must be contiguous from 0 within each
    /// layer and exactly one physical node must be present.
    pub fn read_csv<R: Read>(reader: R, frame: Frame, file: &str) -> Result<Self> {
        let row_err = |row: usize, message: String| Error::Row { file: file.to_string(), row, message };
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != LOCATIONS_HEADER {
            return Err(row_err(1, format!("expected header {}", LOCATIONS_HEADER.join(","))));
        }
        let mut by_layer: HashMap<Layer, Vec<(usize, GeoPoint, usize)>> = HashMap::new();
        for (k, rec) in r.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| row_err(row, e.to_string()))?;
            if rec.len() != 4 {
                return Err(row_err(row, format!("expected 4 fields, found {}", rec.len())));
            }
            let id: usize = rec[0].parse().map_err(|_| row_err(row, format!("bad node_id {:?}", &rec[0])))?;
            let layer = Layer::from_tag(&rec[1]).ok_or_else(|| row_err(row, format!("bad layer {:?}", &rec[1])))?;
            let x: f64 = rec[2].parse().map_err(|_| row_err(row, format!("bad x_or_lon {:?}", &rec[2])))?;
            let y: f64 = rec[3].parse().map_err(|_| row_err(row, format!("bad y_or_lat {:?}", &rec[3])))?;
            let p = GeoPoint::new(frame, x, y).map_err(|e| row_err(row, e.to_string()))?;
            by_layer.entry(layer).or_default().push((id, p, row));
        }
        let mut take = |layer: Layer| -> Result<Vec<GeoPoint>> {
            let mut rows = by_layer.remove(&layer).unwrap_or_default();
            rows.sort_by_key(|(id, _, _)| *id);
            for (expected, (id, _, row)) in rows.iter().enumerate() {
                if *id != expected {
                    return Err(row_err(
                        *row,
                        format!("{} node ids must be contiguous from 0; expected {expected}, found {id}", layer.tag()),
                    ));
                }
            }
            Ok(rows.into_iter().map(|(_, p, _)| p).collect())
        };
        let homes = take(Layer::Home)?;
        let pois = take(Layer::Social)?;
        let physical = take(Layer::Physical)?;
        if physical.len() != 1 {
            return Err(row_err(0, format!("expected exactly one physical node, found {}", physical.len())));
        }
        Ok(Locations { frame, homes, pois, physical: physical[0] })
    }
}
