void pattern(Map foregroundDomainMarkers, ..., Marker marker) {
  ArrayList markers = (ArrayList) foregroundDomainMarkers.get(...);
  if (markers != null) {
    markers.remove(marker);
  }
}
