"""Classical face detection and recognition."""
