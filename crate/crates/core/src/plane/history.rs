use std::collections::VecDeque;

use super::PositionRecord;

/// Bounded per-vehicle store of fed-back, road-projected positions.
#[derive(Debug, Clone)]
pub struct PositionHistory {
    capacity: usize,
    per_vehicle: Vec<VecDeque<PositionRecord>>,
}

impl PositionHistory {
    pub fn new(n_vehicles: usize, capacity: usize) -> Self {
        Self {
            capacity,
            per_vehicle: (0..n_vehicles).map(|_| VecDeque::with_capacity(capacity)).collect(),
        }
    }

    pub fn push(&mut self, record: PositionRecord) {
        let buf = &mut self.per_vehicle[record.vehicle_id];
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back(record);
    }

    /// All records, ordered by vehicle then epoch.
    pub fn snapshot(&self) -> Vec<PositionRecord> {
        self.per_vehicle.iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.per_vehicle.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
