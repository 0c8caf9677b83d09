use std::collections::HashMap;

use super::Record;

const MIN_DEGREE: usize = 5;

/// Drops users and items with fewer than five interactions, repeating until
/// nothing changes. Survivors keep their input order.
pub fn five_core_filter(records: &[Record]) -> Vec<Record> {
    let mut keep = vec![true; records.len()];
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for (r, _) in records.iter().zip(&keep).filter(|(_, &k)| k) {
            *users.entry(&r.user_id).or_default() += 1;
            *items.entry(&r.item_id).or_default() += 1;
        }
        let mut changed = false;
        for (r, k) in records.iter().zip(keep.iter_mut()) {
            if *k && (users[r.user_id.as_str()] < MIN_DEGREE || items[r.item_id.as_str()] < MIN_DEGREE) {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect()
}
