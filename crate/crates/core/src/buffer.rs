/// Fixed-capacity FIFO of boolean firings with a running count of `true`s.
///
/// Pushing into a full window evicts the oldest entry, so `fire_count` always
/// equals the number of firings among the most recent `capacity` pushes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorBuffer {
    slots: Box<[bool]>,
    head: usize,
    len: usize,
    fire_count: usize,
}

impl IndicatorBuffer {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "indicator buffer needs a nonzero capacity");
        IndicatorBuffer {
            slots: vec![false; capacity].into_boxed_slice(),
            head: 0,
            len: 0,
            fire_count: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fire_count(&self) -> usize {
        self.fire_count
    }

    pub fn push(&mut self, fired: bool) {
        let cap = self.slots.len();
        // `head` is the slot of the oldest entry once the window is full.
        let slot = (self.head + self.len) % cap;
        if self.len == cap {
            if self.slots[self.head] {
                self.fire_count -= 1;
            }
            self.head = (self.head + 1) % cap;
        } else {
            self.len += 1;
        }
        self.slots[slot] = fired;
        if fired {
            self.fire_count += 1;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        let cap = self.slots.len();
        (0..self.len).map(move |i| self.slots[(self.head + i) % cap])
    }

    pub fn clear(&mut self) {
        self.slots.fill(false);
        self.head = 0;
        self.len = 0;
        self.fire_count = 0;
    }
}
