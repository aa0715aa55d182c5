package shop.shipping;

import org.springframework.stereotype.Repository;

@Repository
public class ShipmentRepository {

    public Shipment findByOrderId(long orderId) {
        return null;
    }

    public Shipment save(Shipment shipment) {
        return shipment;
    }
}
