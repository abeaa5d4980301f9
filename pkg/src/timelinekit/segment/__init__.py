"""GrabCut segmentation with mask-guided initialization and an exact min-cut solver."""
