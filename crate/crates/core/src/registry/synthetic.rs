use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bounds, PropertySchema, RegistryError, RegistrySnapshot, SensorRecord};
use crate::geo::{BoundingBox, GeoPoint};

/// Sensor types drawn by the synthetic generator.
pub const SENSOR_TYPES: [&str; 6] = [
    "temperature",
    "humidity",
    "pressure",
    "light",
    "motion",
    "air_quality",
];

/// Generates `count` sensors. Each property value is uniform over its declared
/// bounds (`[0, 1]` when the schema declares none); locations are uniform in
/// `region`. The output is a pure function of the arguments.
pub fn synthetic_sensors(
    count: usize,
    schema: &PropertySchema,
    seed: u64,
    region: BoundingBox,
) -> Result<Vec<SensorRecord>, RegistryError> {
    if count == 0 {
        return Err(RegistryError::InvalidSchema("synthetic count must be at least 1".into()));
    }
    if !region.is_valid() {
        return Err(RegistryError::InvalidSchema(format!("invalid region {region:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges: Vec<Bounds> = schema
        .properties()
        .iter()
        .map(|p| p.bounds.unwrap_or(Bounds::UNIT))
        .collect();
    let lon_span = if region.crosses_antimeridian() {
        region.east + 360.0 - region.west
    } else {
        region.east - region.west
    };
    let width = count.to_string().len().max(7);

    let mut values = vec![None; ranges.len()];
    let mut sensors = Vec::with_capacity(count);
    for i in 0..count {
        let sensor_type = SENSOR_TYPES[rng.gen_range(0..SENSOR_TYPES.len())];
        let lat = region.south + (region.north - region.south) * rng.gen::<f64>();
        let mut lon = region.west + lon_span * rng.gen::<f64>();
        if lon > 180.0 {
            lon -= 360.0;
        }
        for (slot, b) in values.iter_mut().zip(&ranges) {
            *slot = Some(b.min + (b.max - b.min) * rng.gen::<f64>());
        }
        sensors.push(SensorRecord::new(
            format!("s{i:0width$}"),
            sensor_type,
            GeoPoint::new(lat, lon),
            &values,
        )?);
    }
    Ok(sensors)
}

/// Synthetic first-version snapshot; see [`synthetic_sensors`].
pub fn generate_synthetic(
    count: usize,
    schema: &PropertySchema,
    seed: u64,
    region: BoundingBox,
) -> Result<RegistrySnapshot, RegistryError> {
    RegistrySnapshot::new(schema.clone(), synthetic_sensors(count, schema, seed, region)?, 1)
}
