use super::{ClassLabel, FlowImage};

/// Contiguous block of corpus images that came from one capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRange {
    pub name: String,
    pub start: usize,
    pub count: usize,
}

impl CaptureRange {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.count
    }
}

/// Labeled flow images plus the capture each block of images came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageCorpus {
    pub images: Vec<FlowImage>,
    pub labels: Vec<ClassLabel>,
    pub captures: Vec<CaptureRange>,
}

impl ImageCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Appends all images of one capture under a single label.
    pub fn push_capture(&mut self, name: impl Into<String>, images: Vec<FlowImage>, label: ClassLabel) {
        let start = self.images.len();
        let count = images.len();
        self.labels.extend(std::iter::repeat(label).take(count));
        self.images.extend(images);
        self.captures.push(CaptureRange {
            name: name.into(),
            start,
            count,
        });
    }

    /// Checks equal lengths and that capture ranges tile `0..len` in order.
    pub fn validate(&self) -> Result<(), String> {
        if self.images.len() != self.labels.len() {
            return Err(format!("{} images but {} labels", self.images.len(), self.labels.len()));
        }
        let mut next = 0;
        for c in &self.captures {
            if c.start != next {
                return Err(format!("capture {:?} starts at {}, expected {}", c.name, c.start, next));
            }
            next += c.count;
        }
        if next != self.images.len() {
            return Err(format!("capture ranges cover {next} of {} images", self.images.len()));
        }
        Ok(())
    }

    /// Images and label of one capture, in flow order.
    pub fn capture(&self, i: usize) -> (&CaptureRange, &[FlowImage], Option<ClassLabel>) {
        let c = &self.captures[i];
        let r = c.range();
        (c, &self.images[r.clone()], self.labels.get(c.start).copied().filter(|_| c.count > 0))
    }
}
